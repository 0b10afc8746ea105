"""Command line entry point: ``tvdiar <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import eval_kit
from . import io as fio
from .pattern_miner import ShotSequence, assign_utterances, coverage_stats, extract_patterns, merge_patterns
from .pipeline import MODES, PipelineConfig, PipelineError, run_pipeline
from .shot_analysis import ShotConfig, cut_positions, detect_cuts, detect_similar_shots
from .synthetic import SyntheticEpisodeConfig, generate_synthetic_episode

log = logging.getLogger("tvdiar")


def _grid(text: str) -> tuple[int, int]:
    try:
        r, c = text.lower().split("x")
        return int(r), int(c)
    except ValueError:
        raise argparse.ArgumentTypeError("grid must look like 5x6") from None


def _bins(text: str) -> tuple[int, int, int]:
    try:
        h, s, v = (int(x) for x in text.split(","))
        return h, s, v
    except ValueError:
        raise argparse.ArgumentTypeError("bins must look like 8,4,4") from None


def _shot_config(args) -> ShotConfig:
    rows, cols = args.grid
    bh, bs, bv = args.bins
    return ShotConfig(args.tau1, args.tau2, rows, cols, bh, bs, bv, args.lookback)


def _add_shot_options(p, required: bool = True):
    p.add_argument("--tau1", type=float, required=required, default=0.5, help="cut threshold (correlation)")
    p.add_argument("--tau2", type=float, required=required, default=0.8, help="similarity threshold (correlation)")
    p.add_argument("--grid", type=_grid, default=(5, 6), help="block grid RxC (default 5x6)")
    p.add_argument("--bins", type=_bins, default=(8, 4, 4), help="HSV bins H,S,V (default 8,4,4)")
    p.add_argument("--fps", type=float, default=25.0)
    p.add_argument("--lookback", type=int, default=None, help="compare with at most N previous shots")


def _load_frames(path, config, fps):
    path = Path(path)
    if path.is_dir():
        return fio.read_frame_dir(path, config, fps)
    return fio.read_histogram_csv(path, config)


def _analyse_shots(input_path, config, fps):
    frames = _load_frames(input_path, config, fps)
    shots = detect_cuts(frames, config, 1.0 / fps)
    labeling = detect_similar_shots(shots, frames, config)
    return shots, labeling.labels


def cmd_shots(args) -> int:
    config = _shot_config(args)
    shots, labels = _analyse_shots(args.input, config, args.fps)
    fio.write_shots(args.out, shots, labels)
    print(f"{len(shots)} shots, {len(set(labels))} labels -> {args.out}")
    return 0


def _patterns(shots, labels, segments, extended, merge):
    ps = extract_patterns(ShotSequence.from_shots(shots, labels), extended=extended)
    if merge:
        ps = merge_patterns(ps)
    return assign_utterances(ps, segments)


def cmd_patterns(args) -> int:
    shots, labels = fio.read_shots(args.shots)
    segments = fio.read_segments(args.segments)
    if args.action == "stats":
        reference = None
        if args.reference:
            reference = {fio.turn_key(o, d): spk for o, d, spk in fio.read_labeled_turns(args.reference)}
            reference = {s.segment_id: reference.get(fio.turn_key(s.start_time, s.duration)) for s in segments}
            reference = {k: v for k, v in reference.items() if v is not None}
        elif any(s.reference_speaker for s in segments):
            reference = {s.segment_id: s.reference_speaker for s in segments if s.reference_speaker}
        rows = []
        for name, extended in (("r", False), ("ext. r", True)):
            ps = _patterns(shots, labels, segments, extended, not args.no_merge)
            rep = coverage_stats(ps, segments, reference)
            rows.append({"rule": name, **rep.as_dict()})
        print(eval_kit.format_table(rows))
        if args.out:
            fio.write_json(args.out, rows)
        return 0
    if not args.out:
        raise SystemExit("patterns: --out is required")
    ps = _patterns(shots, labels, segments, args.extended, not args.no_merge)
    fio.write_patterns(args.out, ps)
    covered = sum(len(p.utterances) for p in ps)
    print(f"{len(ps)} patterns covering {covered}/{len(segments)} segments -> {args.out}")
    return 0


def cmd_synth(args) -> int:
    data = {}
    if args.config:
        data = json.loads(Path(args.config).read_text())
    if args.seed is not None:
        data["seed"] = args.seed
    episode = generate_synthetic_episode(SyntheticEpisodeConfig.from_dict(data))
    paths = fio.write_episode(args.out, episode)
    print(json.dumps(paths, indent=2))
    return 0


def cmd_diarize(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.shots:
        shots, labels = fio.read_shots(args.shots)
    else:
        try:
            shots, labels = _analyse_shots(args.frames, _shot_config(args), args.fps)
        except Exception as exc:
            raise PipelineError("shots", str(exc)) from exc
        fio.write_shots(out / "shots.jsonl", shots, labels)
    segments = fio.read_segments(args.segments)
    embeddings = fio.read_embeddings(args.embeddings)
    training = fio.read_training(args.train) if args.train else None
    config = PipelineConfig(
        mode=args.mode, extended=args.extended, merge=not args.no_merge, normalize=args.normalize, epsilon=args.epsilon
    )
    result = run_pipeline(shots, labels, segments, embeddings, config, training)

    fio.write_rttm(out / "diarization.rttm", result.diarization.labels, segments, args.recording)
    fio.write_patterns(out / "patterns.jsonl", result.patterns)
    if result.local_speakers:
        fio.write_jsonl(
            out / "local_speakers.jsonl",
            ({"id": s.id, "dialogue_id": s.dialogue_id, "segment_ids": s.members} for s in result.local_speakers),
        )
    if result.global_result is not None:
        fio.write_jsonl(out / "forest.jsonl", result.global_result.forest.to_records())
    manifest = dict(result.manifest)
    manifest["inputs"] = {
        "shots": args.shots or args.frames,
        "segments": args.segments,
        "embeddings": args.embeddings,
        "train": args.train,
    }
    fio.write_json(out / "manifest.json", manifest)
    print(f"mode {args.mode}: {len(result.diarization)} segments, {manifest['n_speakers']} speakers -> {out}")
    return 0


def _keyed(turns):
    labels = {fio.turn_key(o, d): spk for o, d, spk in turns}
    durations = {fio.turn_key(o, d): d for o, d, _ in turns}
    midpoints = {fio.turn_key(o, d): o + d / 2 for o, d, _ in turns}
    return labels, durations, midpoints


def cmd_eval(args) -> int:
    if args.what == "der":
        ref, durations, mids = _keyed(fio.read_labeled_turns(args.ref))
        hyp, _, _ = _keyed(fio.read_labeled_turns(args.hyp))
        report = eval_kit.der(ref, hyp, durations)
        result = {"der": report.der, "total": report.total, "confusion": report.confusion, "mapping": report.mapping}
        rows = [{"scope": "all", "DER (%)": 100 * report.der, "speech (s)": report.total}]
        if args.per_dialogue:
            dialogues = {}
            for pid, spans in fio.dialogue_spans(args.per_dialogue).items():
                dialogues[pid] = [k for k in hyp if any(a <= mids[k] < b for a, b in spans)]
            reports = eval_kit.per_dialogue_der(ref, hyp, durations, dialogues)
            for pid, rep in reports.items():
                rows.append({"scope": f"dialogue {pid}", "DER (%)": 100 * rep.der, "speech (s)": rep.total})
            ss = eval_kit.single_show_der(list(reports.values()))
            rows.append({"scope": "single-show", "DER (%)": 100 * ss, "speech (s)": sum(r.total for r in reports.values())})
            result["single_show_der"] = ss
    elif args.what == "cuts":
        ref_shots, _ = fio.read_shots(args.ref)
        hyp_shots, _ = fio.read_shots(args.hyp)
        rep = eval_kit.f1_cuts(cut_positions(ref_shots), cut_positions(hyp_shots), args.tolerance)
        result = rep.__dict__
        rows = [{"task": "shot cut", "precision": rep.precision, "recall": rep.recall, "F1": rep.f1}]
    elif args.what == "sim":
        ref_shots, ref_labels = fio.read_shots(args.ref)
        hyp_shots, hyp_labels = fio.read_shots(args.hyp)
        aligned = eval_kit.aligned_labels(ref_shots, hyp_shots, hyp_labels)
        rep = eval_kit.f1_similarity(ref_labels, aligned)
        result = rep.__dict__
        rows = [{"task": "shot sim", "precision": rep.precision, "recall": rep.recall, "F1": rep.f1}]
    else:  # count
        ref = _keyed(fio.read_labeled_turns(args.ref))[0] if args.ref else None
        systems = {}
        for item in args.hyp:
            name, _, path = item.partition("=")
            systems[name if path else Path(name).stem] = _keyed(fio.read_labeled_turns(path or name))[0]
        rows = eval_kit.speaker_count_report(systems, ref)
        result = rows
    print(eval_kit.format_table(rows))
    if args.json:
        fio.write_json(args.json, result)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tvdiar", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("shots", help="shot cuts and recurring-shot labels from frames")
    p.add_argument("--input", required=True, help="directory of NNNNNN.ppm frames or histogram CSV")
    _add_shot_options(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_shots)

    p = sub.add_parser("patterns", help="dialogue patterns ('patterns stats' for coverage)")
    p.add_argument("action", nargs="?", choices=["stats"], help="report coverage statistics instead")
    p.add_argument("--shots", required=True)
    p.add_argument("--segments", required=True)
    p.add_argument("--extended", action="store_true", help="accept isolated two-shot alternations")
    p.add_argument("--no-merge", action="store_true", help="keep patterns sharing a label apart")
    p.add_argument("--reference", help="reference speakers (RTTM or segment CSV) for stats")
    p.add_argument("--out")
    p.set_defaults(func=cmd_patterns)

    p = sub.add_parser("synth", help="generate a synthetic episode")
    p.add_argument("--config", help="JSON file with SyntheticEpisodeConfig fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("diarize", help="run the two-step diarization")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--shots")
    src.add_argument("--frames", help="frame directory or histogram CSV; shots are detected first")
    p.add_argument("--segments", required=True, help="SRT or CSV segment_id,start,end[,speaker]")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--train", help="labeled training embeddings for the within-class covariance")
    p.add_argument("--mode", choices=MODES, default="cst2s")
    p.add_argument("--extended", action="store_true")
    p.add_argument("--no-merge", action="store_true")
    p.add_argument("--normalize", action="store_true", help="unit-normalize embeddings on input")
    p.add_argument("--epsilon", type=float, default=None, help="covariance regularization")
    p.add_argument("--recording", default="episode")
    _add_shot_options(p, required=False)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diarize)

    p = sub.add_parser("eval", help="scoring")
    esub = p.add_subparsers(dest="what", required=True)
    e = esub.add_parser("der")
    e.add_argument("--ref", required=True)
    e.add_argument("--hyp", required=True)
    e.add_argument("--per-dialogue", help="pattern file; adds per-dialogue and single-show DER")
    e = esub.add_parser("cuts")
    e.add_argument("--ref", required=True)
    e.add_argument("--hyp", required=True)
    e.add_argument("--tolerance", type=int, default=1)
    e = esub.add_parser("sim")
    e.add_argument("--ref", required=True)
    e.add_argument("--hyp", required=True)
    e = esub.add_parser("count")
    e.add_argument("--ref")
    e.add_argument("--hyp", nargs="+", required=True, help="NAME=FILE entries")
    for e in esub.choices.values():
        e.add_argument("--json", help="also write the report as JSON")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (PipelineError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
