"""Physical constants (SI, CODATA 2018 exact values where defined)."""

SPEED_OF_LIGHT = 299792458.0        # m/s
PLANCK = 6.62607015e-34             # J s
BOLTZMANN = 1.380649e-23            # J/K

# dB per neper for power quantities: 10/ln(10)
DB_PER_NEPER = 4.342944819032518
