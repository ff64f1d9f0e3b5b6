import argparse
import json
import logging
import os
import sys
from pathlib import Path

from fastmcp import FastMCP
from pydantic import ValidationError

from app import crud
from app.aggregation import (
    top_groups,
    write_groups_csv,
    write_heatmap_json,
    write_limbs_svg,
    write_summary_json,
)
from app.config import AppConfig, load_config
from app.database import init_db
from app.errors import InputError, NumericError, SchemaError, TrialError
from app.measures import read_heart_rate_csv, read_profile, session_measures
from app.models import ExerciseKind, RpeRating, SessionSummary
from app.muscle_model import load_model
from app.pipeline import analyze_session
from app.serialization import write_json
from app.skeleton_io import read_session, write_session
from app.solver import write_debug_csv
from app.synth import MotionParams, generate
from app.tools.tool import Tools
from app.validation import load_protocol, run_protocol, write_validation

logger = logging.getLogger(__name__)

# This is the central FastMCP application instance.
mcp = FastMCP(
    name="Muscle Work",
    instructions=(
        "You estimate the work done by muscle groups during exercise from skeleton recordings. "
        "Use the available tools to analyze sessions, generate synthetic exercises, and compute "
        "and compare exertion measures across a cohort."
    ),
)

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


class UsageParser(argparse.ArgumentParser):
    """Argument parser that exits with the usage code on bad invocations."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"error: {message}\n")


def _u64(value: str) -> int:
    seed = int(value)
    if not 0 <= seed < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {value}")
    return seed


def _positive(kind):
    def parse(value: str):
        number = kind(value)
        if number <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {value}")
        return number

    return parse


def _rpe(value: str) -> int:
    rating = int(value)
    if not 1 <= rating <= 10:
        raise argparse.ArgumentTypeError(f"RPE must be between 1 and 10, got {value}")
    return rating


def build_parser() -> argparse.ArgumentParser:
    common = UsageParser(add_help=False)
    common.add_argument(
        "--config",
        type=str,
        default=None,
        help="Path to the configuration file (optional, uses env vars/defaults otherwise).",
    )
    common.add_argument("--model", type=str, default=None, help="Musculoskeletal model JSON.")
    common.add_argument("--out", type=str, default=".", help="Output directory.")

    parser = UsageParser(prog="musclework", description="Estimate muscle work from motion.")
    commands = parser.add_subparsers(dest="command", required=True)

    analyze = commands.add_parser("analyze", parents=[common], help="Analyze a skeleton session.")
    analyze.add_argument("input", help="canonical-jsonl or kinect32-jsonl session file")
    analyze.add_argument(
        "--format", choices=["auto", "canonical-jsonl", "kinect32-jsonl"], default="auto"
    )
    analyze.add_argument("--window", type=_positive(int), help="Display window in frames.")
    analyze.add_argument("--rate", type=_positive(float), help="Resampling rate in Hz.")
    analyze.add_argument("--profile", type=str, help="Subject profile JSON (body mass).")
    analyze.add_argument(
        "--debug-dump", action="store_true", help="Also write the per-frame solver dump."
    )

    synth = commands.add_parser("synth", parents=[common], help="Generate a synthetic session.")
    synth.add_argument("kind", choices=[k.value for k in ExerciseKind])
    synth.add_argument("--reps", type=_positive(int), default=5)
    synth.add_argument("--cadence", type=_positive(float), default=0.5, help="Reps per second.")
    synth.add_argument("--noise", type=float, default=0.0, help="Angle noise σ in degrees.")
    synth.add_argument("--seed", type=_u64, default=0)
    synth.add_argument("--mirror", action="store_true", help="Lunge with the left leg in front.")

    validate = commands.add_parser(
        "validate", parents=[common], help="Run the validation protocol."
    )
    validate.add_argument("--protocol", type=str, help="Protocol JSON (bundled default).")
    validate.add_argument(
        "--jobs", type=_positive(int), default=os.cpu_count() or 1, help="Worker processes."
    )
    validate.add_argument("--seed", type=_u64, help="Override the protocol seed.")
    validate.add_argument("--noise", type=float, help="Override the protocol angle noise.")
    validate.add_argument(
        "--mirror", action="store_true", help="Mirror the lunges of every other subject."
    )

    measures = commands.add_parser(
        "measures", parents=[common], help="Compute the exertion measures of a session."
    )
    measures.add_argument("summary", help="summary.json written by analyze")
    measures.add_argument("--profile", type=str, required=True)
    measures.add_argument("--hr", type=str, required=True, help="Heart-rate CSV (t_ms,bpm).")
    measures.add_argument("--rpe", type=_rpe, required=True)
    measures.add_argument("--met", type=float, help="MET value when gender is unspecified.")
    measures.add_argument("--minutes", type=float, help="Duration; session duration otherwise.")
    measures.add_argument("--participant", type=str, help="Store the measures in the cohort.")

    commands.add_parser("serve", parents=[common], help="Run the tool server.")
    return parser


def cmd_analyze(args, config: AppConfig) -> int:
    updates = {}
    if args.window is not None:
        updates["WINDOW_FRAMES"] = args.window
    if args.rate is not None:
        updates["RATE_HZ"] = args.rate
    config = config.model_copy(update=updates)

    model = load_model(args.model, config.SPECIFIC_TENSION)
    session = read_session(args.input, args.format)
    mass = read_profile(args.profile).mass if args.profile else None
    result = analyze_session(session, model, config, mass_kg=mass)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_summary_json(result.summary, out / "summary.json")
    write_groups_csv(result.streams, out / "groups.csv")
    write_heatmap_json(result.streams, result.summary, out / "heatmap.json", config.COLOR_ANCHORS)
    write_limbs_svg(result.summary, out / "limbs.svg")
    if args.debug_dump:
        write_debug_csv(result.forces, out / "solver_debug.csv")

    top = ", ".join(f"{k} {v:.6g}" for k, v in top_groups(result.summary))
    print(f"overall work {result.summary.overall:.6g} N·s; top groups: {top}")
    return EXIT_OK


def cmd_synth(args, config: AppConfig) -> int:
    params = MotionParams(
        reps=args.reps,
        cadence_hz=args.cadence,
        noise_deg=args.noise,
        seed=args.seed,
        mirror=args.mirror,
    )
    session = generate(ExerciseKind(args.kind), params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = write_session(session, out / f"{args.kind}.jsonl")
    print(f"wrote {len(session)} frames to {path}")
    return EXIT_OK


def cmd_validate(args, config: AppConfig) -> int:
    protocol = load_protocol(args.protocol)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.noise is not None:
        updates["noise_deg"] = args.noise
    if args.mirror:
        updates["mirror_lunges"] = "alternate"
    protocol = protocol.model_copy(update=updates)

    model = load_model(args.model, config.SPECIFIC_TENSION)
    results = run_protocol(protocol, model, config, jobs=args.jobs)
    paths = write_validation(results, config, args.out, protocol.noise_deg)
    print(f"{len(results)} trials; wrote {', '.join(str(p) for p in paths.values())}")
    return EXIT_OK


def cmd_measures(args, config: AppConfig) -> int:
    try:
        summary = SessionSummary.model_validate_json(
            Path(args.summary).read_text(encoding="utf-8")
        )
    except ValidationError as e:
        raise SchemaError(f"summary {args.summary}: {e}") from e
    profile = read_profile(args.profile)
    rpe = RpeRating(value=args.rpe)
    measures = session_measures(
        summary,
        profile,
        read_heart_rate_csv(args.hr),
        rpe,
        met=args.met,
        minutes=args.minutes,
        default_mass=config.DEFAULT_MASS_KG,
        rpe_base=config.RPE_BASE,
        rpe_slope=config.RPE_SLOPE,
        equal_band=config.RPE_EQUAL_BAND,
    )

    if config.COHORT_DATABASE_URL and args.participant:
        session_local = init_db(config.COHORT_DATABASE_URL)
        with session_local() as db:
            crud.record_measures(db=db, participant=args.participant, measures=measures)
            if len(crud.get_measures(db=db)) >= 2:
                cohort = {r["participant"]: r for r in crud.cohort_normalized(db=db)}
                measures = measures.model_copy(
                    update={"h_mw_normalized": cohort[args.participant]["h_mw"]}
                )
    elif args.participant:
        logger.warning("COHORT_DATABASE_URL is not set; %s is not stored", args.participant)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    record = {"participant": args.participant, "rpe_label": rpe.label}
    write_json({**record, **measures.model_dump(mode="json")}, out / "measures.json")
    print(
        f"BC {measures.bc_kcal:.6g} kcal ({measures.bc_method}); RPE {rpe.value} ({rpe.label}): "
        f"{measures.verdict} than predicted {measures.rpe_predicted_hr:.6g} bpm; "
        f"MW {measures.mw_total:.6g} N·s"
    )
    return EXIT_OK


def cmd_serve(args, config: AppConfig) -> int:
    Tools(mcp, config, model_path=args.model)
    mcp.run(transport="http", host=config.HOST, port=config.PORT)
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "synth": cmd_synth,
    "validate": cmd_validate,
    "measures": cmd_measures,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    """
    Entry point of the musclework command line.

    Returns:
        0 on success, 1 on usage errors, 2 on input errors, 3 on solver or numeric failures.
    """
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
    except (json.JSONDecodeError, ValidationError) as e:
        print(f"error: config {args.config}: {e}", file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(
        level=config.log_level,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )

    try:
        return COMMANDS[args.command](args, config)
    except TrialError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC if isinstance(e.cause, NumericError) else EXIT_INPUT
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, ValidationError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
