"""Command-line workflow: a thin client of the HTTP service.

By default the commands talk to an in-process instance of the app, so no
server or network is needed; pass --server URL to target a running instance
instead.  Every run writes an echoed config and a manifest sufficient to
reproduce it.  Exit codes: 0 success, 2 validation/usage error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from .errors import ConfigError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

_FLOAT_FMT = "{:.9g}"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_VALIDATION)


class ServiceClient:
    """HTTP access to the service, in-process unless a server URL is given."""

    def __init__(self, server=None):
        if server:
            import httpx
            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            import warnings
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                from starlette.testclient import TestClient
            from .service import app
            self._client = TestClient(app, raise_server_exceptions=False)

    def get(self, path):
        return self._client.get(path)

    def post(self, path, payload):
        return self._client.post(path, json=payload)


def _fmt(value):
    if isinstance(value, float):
        return _FLOAT_FMT.format(value)
    return str(value)


def _write_csv(path: Path, header, rows):
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    path.write_text(buf.getvalue(), encoding="utf-8")


def _write_json(path: Path, payload):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _load_config_payload(args):
    """Raw config dict from --config plus --mode/--seed/--spans overrides."""
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("configuration root must be a JSON object")
    else:
        data = {}
    if getattr(args, "mode", None):
        data["mode"] = args.mode
    if getattr(args, "seed", None) is not None:
        data.setdefault("optimizer", {})
        if not isinstance(data["optimizer"], dict):
            raise ConfigError("/optimizer: must be an object")
        data["optimizer"]["rng_seed"] = args.seed
    return data


def _out_dir(args, response_config=None):
    out = getattr(args, "out", None)
    if out is None and response_config:
        out = response_config.get("output_dir")
    out = Path(out or "uwblink_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(args, extra=None):
    payload = {
        "command": args.command,
        "argv": sys.argv[1:],
        "config_file": args.config,
        "mode": getattr(args, "mode", None),
        "seed": getattr(args, "seed", None),
        "spans": getattr(args, "spans", None),
    }
    if extra:
        payload.update(extra)
    return payload


def _fail_from_response(resp):
    try:
        detail = resp.json().get("detail", resp.text)
    except Exception:
        detail = resp.text
    sys.stderr.write(f"error ({resp.status_code}): {detail}\n")
    return EXIT_NUMERICAL if resp.status_code >= 500 else EXIT_VALIDATION


def _echo_and_manifest(out, body_config, args, extra=None):
    _write_json(out / "config_echo.json", body_config)
    _write_json(out / "run_manifest.json", _manifest(args, extra))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_simulate(client, args):
    payload = {"config": _load_config_payload(args),
               "include_evolution": bool(args.include_evolution)}
    if args.spans is not None:
        payload["n_spans"] = args.spans
    resp = client.post("/simulate", payload)
    if resp.status_code != 200:
        return _fail_from_response(resp)
    body = resp.json()
    out = _out_dir(args, body["config"])
    rep = body["report"]
    order = sorted(range(len(rep["wavelength_nm"])), key=lambda i: rep["wavelength_nm"][i])
    _write_csv(out / "snr_report.csv",
               ["wavelength_nm", "snr_ase_db", "snr_nli_db", "snr_total_db"],
               [(rep["wavelength_nm"][i], rep["snr_ase_db"][i],
                 rep["snr_nli_db"][i], rep["snr_total_db"][i]) for i in order])
    _write_json(out / "summary.json", body["summary"])
    if body.get("evolution"):
        _write_evolution_csv(out / "power_evolution.csv", body["evolution"])
    _echo_and_manifest(out, body["config"], args)
    s = body["summary"]
    print(f"spans={rep['n_spans']} channels={s['n_channels']} "
          f"throughput={rep['throughput_tbps']:.2f} Tb/s "
          f"avg SNR={rep['average_snr_db']:.2f} dB")
    print(f"artifacts: {out}")
    return EXIT_OK


def _write_evolution_csv(path, evo):
    rows = []
    for w, label in enumerate(evo["labels"]):
        for i, z in enumerate(evo["z_km"]):
            rows.append((z, label, evo["power_mw"][w][i]))
    _write_csv(path, ["z_km", "wave_id", "power_mw"], rows)


def _cmd_optimize_pumps(client, args):
    payload = {"config": _load_config_payload(args)}
    resp = client.post("/optimize/pumps", payload)
    if resp.status_code != 200:
        return _fail_from_response(resp)
    body = resp.json()
    out = _out_dir(args, body["config"])
    _write_csv(out / "pumps.csv",
               ["wavelength_nm", "power_mw", "direction", "negligible"],
               [(p["wavelength_nm"], p["power_mw"], p["direction"], p["negligible"])
                for p in body["pumps"]])
    _write_csv(out / "stage1_trace.csv", ["iteration", "best_objective_tbps"],
               list(enumerate(body["iteration_trace"])))
    _write_json(out / "stage1_summary.json", {
        "total_lp_dbm": body["total_lp_dbm"],
        "uniform_per_channel_dbm": body["uniform_per_channel_dbm"],
        "best_objective_tbps": body["best_objective_tbps"],
        "n_evaluations": body["n_evaluations"],
        "n_failed_evaluations": body["n_failed_evaluations"],
    })
    _echo_and_manifest(out, body["config"], args)
    print(f"stage 1 best objective: {body['best_objective_tbps']:.3f} Tb/s "
          f"at total LP {body['total_lp_dbm']:.2f} dBm "
          f"({body['uniform_per_channel_dbm']:.2f} dBm/channel); "
          f"failed evals: {body['n_failed_evaluations']}")
    print(f"artifacts: {out}")
    return EXIT_OK


def _cmd_optimize_power(client, args):
    payload = {"config": _load_config_payload(args)}
    resp = client.post("/optimize/launch-profile", payload)
    if resp.status_code != 200:
        return _fail_from_response(resp)
    body = resp.json()
    out = _out_dir(args, body["config"])
    _write_csv(out / "launch_profile.csv",
               ["channel", "wavelength_nm", "launch_dbm"],
               [(i, body["wavelength_nm"][i], body["profile_dbm"][i])
                for i in range(len(body["profile_dbm"]))])
    _write_csv(out / "stage2_trace.csv", ["iteration", "best_objective_tbps"],
               list(enumerate(body["iteration_trace"])))
    _write_json(out / "stage2_summary.json", {
        "best_objective_tbps": body["best_objective_tbps"],
        "n_evaluations": body["n_evaluations"],
        "n_failed_evaluations": body["n_failed_evaluations"],
    })
    _echo_and_manifest(out, body["config"], args)
    print(f"stage 2 best objective: {body['best_objective_tbps']:.3f} Tb/s; "
          f"failed evals: {body['n_failed_evaluations']}")
    print(f"artifacts: {out}")
    return EXIT_OK


def _read_profile_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "launch_dbm" not in reader.fieldnames:
            raise ConfigError(f"{path}: need a CSV with a launch_dbm column")
        return [float(row["launch_dbm"]) for row in reader]


def _cmd_smooth(client, args):
    if args.profile:
        profile = _read_profile_csv(args.profile)
    else:
        raise ConfigError("smooth requires --profile pointing to a launch_profile.csv")
    payload = {"profile_dbm": profile, "window": args.window, "order": args.order,
               "evaluate_throughput": not args.no_throughput}
    if not args.no_throughput:
        payload["config"] = _load_config_payload(args)
    resp = client.post("/smooth", payload)
    if resp.status_code != 200:
        return _fail_from_response(resp)
    body = resp.json()
    out = _out_dir(args)
    _write_csv(out / "smoothed_profile.csv", ["channel", "launch_dbm"],
               list(enumerate(body["smoothed_dbm"])))
    _write_json(out / "smooth_summary.json", {
        "window": body["window"], "order": body["order"],
        "throughput_raw_tbps": body.get("throughput_raw_tbps"),
        "throughput_smoothed_tbps": body.get("throughput_smoothed_tbps"),
        "throughput_delta_tbps": body.get("throughput_delta_tbps"),
    })
    _echo_and_manifest(out, payload.get("config", {}), args)
    if body.get("throughput_delta_tbps") is not None:
        print(f"throughput delta after smoothing: {body['throughput_delta_tbps']:+.4f} Tb/s")
    print(f"artifacts: {out}")
    return EXIT_OK


def _cmd_report(client, args):
    payload = {"config": _load_config_payload(args), "include_evolution": True}
    if args.spans is not None:
        payload["n_spans"] = args.spans
    resp = client.post("/report", payload)
    if resp.status_code != 200:
        return _fail_from_response(resp)
    body = resp.json()
    out = _out_dir(args, body["config"])
    rep = body["report"]
    order = sorted(range(len(rep["wavelength_nm"])), key=lambda i: rep["wavelength_nm"][i])
    _write_evolution_csv(out / "power_evolution.csv", body["evolution"])
    _write_csv(out / "launch_profile.csv", ["channel", "wavelength_nm", "launch_dbm"],
               [(i, rep["wavelength_nm"][i], rep["launch_dbm"][i])
                for i in range(len(rep["launch_dbm"]))])
    _write_csv(out / "snr_spectrum.csv",
               ["wavelength_nm", "snr_ase_db", "snr_nli_db", "snr_total_db"],
               [(rep["wavelength_nm"][i], rep["snr_ase_db"][i],
                 rep["snr_nli_db"][i], rep["snr_total_db"][i]) for i in order])
    _write_json(out / "summary.json", body["summary"])
    _echo_and_manifest(out, body["config"], args)
    print(f"report bundle for {rep['n_spans']} spans written to {out}")
    return EXIT_OK


def _cmd_oracle_check(client, args):
    payload = {"channels": args.channels, "cases": args.cases, "seed": args.seed or 42}
    resp = client.post("/oracle-check", payload)
    if resp.status_code != 200:
        return _fail_from_response(resp)
    body = resp.json()
    out = _out_dir(args)
    cols = ["case", "channel", "wavelength_nm", "launch_dbm", "closed_form_nli_dbm",
            "oracle_nli_dbm", "deviation_db", "oracle_achieved_error", "n_pumps"]
    _write_csv(out / "oracle_check.csv", cols,
               [tuple(row[c] for c in cols) for row in body["rows"]])
    _write_json(out / "oracle_summary.json", body["summary"])
    _echo_and_manifest(out, {}, args)
    s = body["summary"]
    print(f"{'case':>4} {'chan':>5} {'closed-form dBm':>16} {'oracle dBm':>12} {'dev dB':>8}")
    for row in body["rows"]:
        print(f"{row['case']:>4} {str(row['channel']):>5} "
              f"{row['closed_form_nli_dbm']:>16.3f} {row['oracle_nli_dbm']:>12.3f} "
              f"{row['deviation_db']:>8.3f}")
    print(f"worst per-channel deviation: {s['worst_channel_deviation_db']:.3f} dB; "
          f"worst total deviation: {s['worst_total_deviation_db']:.3f} dB")
    print(f"artifacts: {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="uwblink",
                     description="Ultra-wideband hybrid-amplified link simulator "
                                 "and launch-power/pump optimizer")
    parser.add_argument("--server", default=None,
                        help="URL of a running service (default: in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, spans=False):
        p.add_argument("--config", default=None, help="scenario JSON file")
        p.add_argument("--mode", choices=["hybrid", "lumped"], default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="artifact directory")
        if spans:
            p.add_argument("--spans", type=int, default=None)

    p = sub.add_parser("simulate", help="per-channel SNR report for a scenario")
    common(p, spans=True)
    p.add_argument("--include-evolution", action="store_true")

    p = sub.add_parser("optimize-pumps", help="stage 1: pumps + uniform launch power")
    common(p)

    p = sub.add_parser("optimize-power", help="stage 2: per-channel launch power")
    common(p)

    p = sub.add_parser("smooth", help="Savitzky-Golay smoothing of a profile")
    common(p)
    p.add_argument("--profile", default=None, help="launch_profile.csv to smooth")
    p.add_argument("--window", type=int, default=7)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--no-throughput", action="store_true",
                   help="skip the throughput-delta evaluation")

    p = sub.add_parser("report", help="power-evolution / profile / SNR CSV bundle")
    common(p, spans=True)

    p = sub.add_parser("oracle-check", help="closed-form NLI vs numerical oracle")
    p.add_argument("--channels", type=int, default=5)
    p.add_argument("--cases", type=int, default=3)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None, help=argparse.SUPPRESS)
    return parser


_COMMANDS = {
    "simulate": _cmd_simulate,
    "optimize-pumps": _cmd_optimize_pumps,
    "optimize-power": _cmd_optimize_power,
    "smooth": _cmd_smooth,
    "report": _cmd_report,
    "oracle-check": _cmd_oracle_check,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_VALIDATION
    try:
        client = ServiceClient(args.server)
        return _COMMANDS[args.command](client, args)
    except ConfigError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
