"""Command-line front end.

Every command builds a service request model and either executes the
service handler in-process (default) or posts it to a running service
(``--server URL``); outputs are a pure function of the input file and
flags.  Exit codes: 0 success, 1 malformed input or usage error, 2 failed
mathematical hypotheses (the report is printed), 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any

from . import pipeline, service
from .errors import (
    CurveEmissionError,
    HypothesisError,
    ParamfoldError,
    SpecFormatError,
)
from .model import load_map_spec

EXIT_OK = 0
EXIT_BAD_INPUT = 1
EXIT_HYPOTHESIS = 2
EXIT_NUMERIC = 3

_KIND_EXIT = {"spec-format": EXIT_BAD_INPUT, "hypothesis": EXIT_HYPOTHESIS}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags, which collides with the
    # hypothesis-failure code; route usage problems to exit 1 instead.
    def error(self, message: str):  # noqa: D401 - argparse hook
        raise _UsageError(message)


def _exit_code_for(exc: ParamfoldError) -> int:
    return _KIND_EXIT.get(exc.kind, EXIT_NUMERIC)


class RemoteError(ParamfoldError):
    def __init__(self, kind: str, message: str, report: Any = None):
        super().__init__(message)
        self.kind = kind
        self.report = report


class Client:
    """Thin client over the service: in-process by default, HTTP if a
    server URL is given."""

    def __init__(self, server: str | None = None):
        self.server = server.rstrip("/") if server else None

    def call(self, path: str, handler, request):
        if self.server is None:
            return handler(request).model_dump()
        import httpx

        resp = httpx.post(
            f"{self.server}{path}", json=request.model_dump(), timeout=600.0
        )
        if resp.status_code >= 400:
            try:
                err = resp.json()["error"]
            except Exception:
                raise RemoteError("numeric", f"server error {resp.status_code}")
            raise RemoteError(
                err.get("kind", "numeric"),
                err.get("message", "server error"),
                err.get("report"),
            )
        return resp.json()


def _load_map_model(path: str) -> service.MapSpecModel:
    spec = load_map_spec(path)
    d = spec.to_dict()
    return service.MapSpecModel(**d)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _json_text(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _dump_artifacts(dump_dir: str, artifacts: dict[str, Any]) -> None:
    d = Path(dump_dir)
    d.mkdir(parents=True, exist_ok=True)
    for name, payload in artifacts.items():
        (d / f"{name}.json").write_text(_json_text(payload), encoding="utf-8")


def build_parser() -> _Parser:
    p = _Parser(prog="paramfold", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp, curve: bool = False):
        sp.add_argument("--in", dest="infile", required=True, help="map spec JSON")
        sp.add_argument("--out", help="output path (default stdout)")
        sp.add_argument(
            "--format", choices=("json", "csv"), default=None, help="output format"
        )
        sp.add_argument("--server", help="run against a service at this URL")
        if curve:
            sp.add_argument("--branch", choices=("stable", "unstable"), default="stable")
            sp.add_argument("--order", type=int, default=10)
            sp.add_argument("--rho", type=float, default=None)
            sp.add_argument("--tol", type=float, default=1e-12)
            sp.add_argument("--grid", type=int, default=32)
            sp.add_argument("--gamma", type=float, default=None)

    sp = sub.add_parser("classify", help="reduced form, case tag and hypothesis report")
    add_common(sp)

    sp = sub.add_parser("approx", help="formal polynomial pair to a given order")
    add_common(sp)
    sp.add_argument("--branch", choices=("stable", "unstable"), default="stable")
    sp.add_argument("--order", type=int, default=10)
    sp.add_argument("--second-family", action="store_true")
    sp.add_argument("--tie-break", type=float, default=0.0)

    sp = sub.add_parser("residual", help="defect report of a stored parameterization")
    add_common(sp)
    sp.add_argument("--params", required=True, help="parameterization JSON file")

    sp = sub.add_parser("refine", help="contraction solve for the exact correction")
    add_common(sp, curve=True)
    sp.add_argument("--max-sweeps", type=int, default=60)

    sp = sub.add_parser("globalize", help="curve points at explicit parameters")
    add_common(sp, curve=True)
    sp.add_argument(
        "--t", dest="ts", type=float, action="append", required=True,
        help="curve parameter (repeatable)",
    )

    sp = sub.add_parser("full", help="classify, approximate, refine and emit a curve")
    add_common(sp, curve=True)
    sp.add_argument("--tmax", type=float, default=None)
    sp.add_argument("--tmin", type=float, default=None)
    sp.add_argument("--samples", type=int, default=None)
    sp.add_argument("--dump-dir", default=None, help="write intermediate artifacts")

    sp = sub.add_parser("serve", help="run the HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8642)

    return p


def _require_json_format(args) -> None:
    if args.format == "csv":
        raise _UsageError(
            f"'{args.command}' emits JSON reports; csv applies to curve output"
        )


def _cmd_classify(args, client: Client) -> int:
    _require_json_format(args)
    req = service.ClassifyRequest(map=_load_map_model(args.infile))
    out = client.call("/classify", service.handle_classify, req)
    _emit(_json_text(out), args.out)
    return EXIT_OK


def _cmd_approx(args, client: Client) -> int:
    _require_json_format(args)
    req = service.ApproxRequest(
        map=_load_map_model(args.infile),
        branch=args.branch,
        order=args.order,
        second_family=args.second_family,
        tie_break=args.tie_break,
    )
    out = client.call("/approx", service.handle_approx, req)
    _emit(_json_text(out), args.out)
    return EXIT_OK


def _cmd_residual(args, client: Client) -> int:
    _require_json_format(args)
    try:
        params = json.loads(Path(args.params).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecFormatError(f"cannot read parameterization: {exc}") from exc
    req = service.ResidualRequest(
        map=_load_map_model(args.infile), parameterization=params
    )
    out = client.call("/residual", service.handle_residual, req)
    _emit(_json_text(out), args.out)
    return EXIT_OK


def _cmd_refine(args, client: Client) -> int:
    _require_json_format(args)
    req = service.RefineRequest(
        map=_load_map_model(args.infile),
        branch=args.branch,
        order=args.order,
        rho=args.rho,
        tol=args.tol,
        grid=args.grid,
        max_sweeps=args.max_sweeps,
        gamma=args.gamma,
    )
    out = client.call("/refine", service.handle_refine, req)
    table = out.get("convergence_table", [])
    table_text = "\n".join(
        f"sweep {int(s):3d}  sup_change {c:.6e}  residual_sup {r:.6e}"
        for s, c, r in table
    )
    if args.out:
        _emit(_json_text(out), args.out)
        if table_text:
            sys.stdout.write(table_text + "\n")
    else:
        _emit(_json_text(out), None)
        if table_text:
            sys.stderr.write(table_text + "\n")
    return EXIT_OK


def _cmd_globalize(args, client: Client) -> int:
    req = service.GlobalizeRequest(
        map=_load_map_model(args.infile),
        t=args.ts,
        branch=args.branch,
        order=args.order,
        rho=args.rho,
        tol=args.tol,
        grid=args.grid,
    )
    out = client.call("/globalize", service.handle_globalize, req)
    if args.format == "csv":
        _emit(pipeline.points_to_csv(out["points"]), args.out)
    else:
        _emit(_json_text(out), args.out)
    return EXIT_OK


def _cmd_full(args, client: Client) -> int:
    if args.dump_dir and args.server:
        raise _UsageError("--dump-dir requires in-process execution, not --server")
    req = service.FullRequest(
        map=_load_map_model(args.infile),
        branch=args.branch,
        order=args.order,
        rho=args.rho,
        tol=args.tol,
        grid=args.grid,
        tmax=args.tmax,
        tmin=args.tmin,
        samples=args.samples,
        gamma=args.gamma,
    )
    try:
        if args.dump_dir:
            payload, bundle = pipeline.run_full(
                req.map.to_spec(),
                branch=req.branch,
                order=req.order,
                rho=req.rho,
                tol=req.tol,
                grid_m=req.grid,
                tmax=req.tmax,
                tmin=req.tmin,
                samples=req.samples,
                gamma=req.gamma,
            )
            out = payload
            _dump_artifacts(args.dump_dir, bundle.artifacts())
        else:
            out = client.call("/full", service.handle_full, req)
    except CurveEmissionError as exc:
        # Emit the rows reached before the failure, warn, and exit 3.
        _emit(pipeline.rows_to_csv(exc.rows), args.out)
        sys.stderr.write(f"warning: curve truncated: {exc}\n")
        return EXIT_NUMERIC
    if args.format == "json":
        _emit(_json_text(out), args.out)
    else:
        _emit(pipeline.rows_to_csv(out["rows"]), args.out)
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("paramfold.service:app", host=args.host, port=args.port)
    return EXIT_OK


_COMMANDS = {
    "classify": _cmd_classify,
    "approx": _cmd_approx,
    "residual": _cmd_residual,
    "refine": _cmd_refine,
    "globalize": _cmd_globalize,
    "full": _cmd_full,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_BAD_INPUT
    if args.command == "serve":
        return _cmd_serve(args)
    client = Client(getattr(args, "server", None))
    try:
        return _COMMANDS[args.command](args, client)
    except _UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_BAD_INPUT
    except HypothesisError as exc:
        body = service.error_body(exc)
        sys.stderr.write(_json_text(body))
        return EXIT_HYPOTHESIS
    except SpecFormatError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_BAD_INPUT
    except ParamfoldError as exc:
        body = service.error_body(exc)
        sys.stderr.write(_json_text(body))
        return _exit_code_for(exc)
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
