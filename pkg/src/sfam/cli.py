"""Pipeline driver: every stage as a subcommand, plus an end-to-end
``pipeline`` command chaining synth -> flow -> encode -> train -> score ->
report on synthetic data.

Exit codes: 0 success, 2 usage, 3 data error, 4 numerical failure. Each
stage records input/output hashes, its configuration, and the seed in the
run manifest so reruns are auditable and ``--skip-existing`` can prove a
stage is current.
"""

import argparse
import hashlib
import json
import os
import sys
import zlib
from dataclasses import asdict, replace

import numpy as np

from . import calibrate as cal
from . import classify as cls
from . import ctk as ctk_mod
from . import encode as enc
from . import pdflow, rankpool, synth
from .errors import DataError, NumericalError
from .ingest import load_sequence, remove_background, save_sequence

DEFAULT_VARIANTS = "d,s,rp,amrp"

_VARIANT_CHOICES = ("d", "s", "rp", "amrp", "labrp", "ctkrp")


def substream_seed(root_seed, name):
    """Stable per-stage seed derived from the root seed and the stage name."""
    ss = np.random.SeedSequence([int(root_seed), zlib.crc32(name.encode("utf-8"))])
    return int(ss.generate_state(1)[0])


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _hash_tree(paths, base):
    out = {}
    for p in sorted(paths):
        if os.path.isdir(p):
            for root, _, files in os.walk(p):
                for f in sorted(files):
                    full = os.path.join(root, f)
                    out[os.path.relpath(full, base)] = _sha256(full)
        elif os.path.isfile(p):
            out[os.path.relpath(p, base)] = _sha256(p)
    return out


class RunManifest:
    """Per-stage provenance records stored next to the pipeline outputs."""

    def __init__(self, workdir):
        self.workdir = workdir
        self.path = os.path.join(workdir, "manifest.json")
        self.records = {}
        if os.path.isfile(self.path):
            with open(self.path, "r", encoding="utf-8") as fh:
                self.records = json.load(fh)

    def stage_is_current(self, name, fingerprint, outputs):
        rec = self.records.get(name)
        if rec is None or rec.get("fingerprint") != fingerprint:
            return False
        recorded = rec.get("outputs", {})
        if not recorded:
            return False
        for rel, digest in recorded.items():
            full = os.path.join(self.workdir, rel)
            if not os.path.isfile(full) or _sha256(full) != digest:
                return False
        return True

    def record(self, name, fingerprint, outputs):
        self.records[name] = {
            "fingerprint": fingerprint,
            "outputs": _hash_tree(outputs, self.workdir),
        }
        with open(self.path, "w", encoding="utf-8") as fh:
            json.dump(self.records, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _read_index(path):
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            seq_id, label = line.split()
            entries.append((seq_id, int(label)))
    if not entries:
        raise DataError(f"{path}: empty index")
    return entries


def _write_index(path, entries):
    with open(path, "w", encoding="utf-8") as fh:
        for seq_id, label in entries:
            fh.write(f"{seq_id} {label}\n")


def _parse_size(text):
    if "x" in text:
        h, w = text.lower().split("x")
        return int(h), int(w)
    n = int(text)
    return n, n


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args):
    size = _parse_size(args.size)
    sequences = synth.generate_action_dataset(
        num_classes=args.num_classes,
        samples_per_class=args.samples_per_class,
        seed=args.seed,
        image_size=size,
        frames_range=(args.frames_min, args.frames_max),
    )
    os.makedirs(args.out, exist_ok=True)
    entries = []
    for seq in sequences:
        save_sequence(seq, os.path.join(args.out, seq.sequence_id))
        entries.append((seq.sequence_id, seq.label))
    _write_index(os.path.join(args.out, "index.txt"), entries)
    print(f"[synth] wrote {len(entries)} sequences to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# calibrate


def cmd_calibrate(args):
    matches = cal.load_matches(args.matches)
    h, mask = cal.ransac_homography(
        matches,
        inlier_threshold=args.threshold,
        max_iters=args.max_iters,
        seed=args.seed,
    )
    cal.save_homography(args.out, h)
    mask_path = args.inlier_mask or args.out + ".inliers"
    with open(mask_path, "w", encoding="utf-8") as fh:
        for flag in mask:
            fh.write(f"{int(flag)}\n")
    print(f"[calibrate] {int(mask.sum())}/{len(matches)} inliers -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# flow


def _sequence_manifest(path):
    if os.path.isdir(path):
        return os.path.join(path, "manifest.txt")
    return path


def _flow_files(flow_dir):
    files = sorted(
        f for f in os.listdir(flow_dir) if f.endswith(".sfw")
    )
    if not files:
        raise DataError(f"no .sfw flow files in {flow_dir}")
    return [os.path.join(flow_dir, f) for f in files]


def _compute_sequence_flows(seq, cfg, homography=None, bg_tolerance=None):
    frames = list(seq.frames)
    if homography is not None:
        frames = [
            replace_depth(f, cal.warp_depth(f.depth, homography)) for f in frames
        ]
    if bg_tolerance is not None:
        frames = [remove_background(f, bg_tolerance) for f in frames]
    flows = []
    for f0, f1 in zip(frames[:-1], frames[1:]):
        flows.append(pdflow.compute_scene_flow(f0, f1, cfg))
    return flows


def replace_depth(frame, depth):
    from .ingest import RgbdFrame

    return RgbdFrame(frame.intensity, depth, frame.timestamp_index, frame.intrinsics)


def cmd_flow(args):
    cfg = pdflow.SolverConfig.from_file(args.config) if args.config else pdflow.SolverConfig()
    homography = cal.load_homography(args.homography) if args.homography else None
    seq = load_sequence(_sequence_manifest(args.sequence))
    tol = args.bg_tolerance if args.remove_background else None
    flows = _compute_sequence_flows(seq, cfg, homography, tol)
    os.makedirs(args.flow_out_dir, exist_ok=True)
    for t, field in enumerate(flows):
        pdflow.write_flow(os.path.join(args.flow_out_dir, f"pair_{t:04d}.sfw"), field)
    print(f"[flow] wrote {len(flows)} flow files to {args.flow_out_dir}")
    return 0


# ---------------------------------------------------------------------------
# encode


def _load_sfms(flow_dir):
    flows = [pdflow.read_flow(p) for p in _flow_files(flow_dir)]
    return enc.build_sfm_sequence(flows)


def _encode_variant(sfms, variant, direction, rp_cfg, stack=None):
    """Build (tag, ActionMap) outputs for one variant request."""
    directions = ("forward", "backward") if direction == "both" else (direction,)
    outs = []
    if variant == "d":
        outs.append(enc.sfam_d(sfms))
    elif variant == "s":
        outs.append(enc.sfam_s(sfms))
    elif variant == "rp":
        for d in directions:
            outs.append(rankpool.rank_pool_map_sequence(sfms, replace(rp_cfg, direction=d)))
    elif variant == "amrp":
        amps = enc.amplitude_maps(sfms)
        for d in directions:
            pooled = rankpool.rank_pool_grids(amps, replace(rp_cfg, direction=d))
            tag = "AMRPf" if d == "forward" else "AMRPb"
            outs.append(enc.ActionMap(pooled, pooled.copy(), pooled.copy(), tag))
    elif variant == "labrp":
        labs = enc.lab_maps(sfms)
        for d in directions:
            tag = "LABRPf" if d == "forward" else "LABRPb"
            outs.append(
                rankpool.rank_pool_map_sequence(labs, replace(rp_cfg, direction=d), variant_tag=tag)
            )
    elif variant == "ctkrp":
        if stack is None:
            raise DataError("--ctk-stack is required for the ctkrp variant")
        outs.append(ctk_mod.ctk_encode(sfms, stack))
    else:
        raise DataError(f"unknown variant {variant!r}")
    return outs


def cmd_encode(args):
    sfms = _load_sfms(args.flow_dir)
    rp_cfg = rankpool.RankPoolConfig(lam=args.lam, max_epochs=args.max_epochs)
    stack = ctk_mod.ChannelKernelStack.from_file(args.ctk_stack) if args.ctk_stack else None
    os.makedirs(args.out_dir, exist_ok=True)
    written = []
    for variant in args.variant.split(","):
        for amap in _encode_variant(sfms, variant.strip(), args.direction, rp_cfg, stack):
            png = os.path.join(args.out_dir, f"{args.prefix}{amap.variant_tag}.png")
            enc.save_action_map(amap, png)
            written.append(png)
    print(f"[encode] wrote {len(written)} action map(s) to {args.out_dir}")
    return 0


# ---------------------------------------------------------------------------
# train-ctk


def _dataset_sfms(flow_root, entries):
    return [(_load_sfms(os.path.join(flow_root, seq_id)), label) for seq_id, label in entries]


def cmd_train_ctk(args):
    entries = _read_index(os.path.join(args.dataset, "index.txt"))
    dataset = _dataset_sfms(args.flow_root, entries)
    num_classes = len({label for _, label in entries})
    state = ctk_mod.CtkTrainState.initialize(
        num_classes=num_classes, learning_rate=args.lr, seed=args.seed
    )
    state = ctk_mod.train_ctk(dataset, state, epochs=args.epochs)
    state.stack.to_file(args.out)
    print(
        f"[train-ctk] {args.epochs} epochs, loss {state.loss_history[0]:.4f} -> "
        f"{state.loss_history[-1]:.4f}, stack -> {args.out}"
    )
    return 0


# ---------------------------------------------------------------------------
# train-channel / scoring


def cmd_train_channel(args):
    entries = _read_index(args.index)
    maps = []
    for seq_id, label in entries:
        png = os.path.join(args.maps_root, f"{seq_id}_{args.variant}.png")
        maps.append((enc.load_action_map(png), label))
    model = cls.train_channel(maps, kind=args.kind, seed=args.seed)
    cls.save_model(args.out, model)
    print(f"[train-channel] {args.variant} ({args.kind}) -> {args.out}")
    return 0


def _score_entries(model, maps_root, entries, variant):
    rows = []
    for seq_id, _ in entries:
        amap = enc.load_action_map(os.path.join(maps_root, f"{seq_id}_{variant}.png"))
        rows.append((seq_id, cls.predict_scores(model, amap).scores))
    return rows


# ---------------------------------------------------------------------------
# fuse / eval


def _fuse_files(score_paths, rule):
    all_scores = []
    classes = None
    for p in score_paths:
        entries, cl = cls.read_scores(p)
        all_scores.append(entries)
        if classes is None and cl is not None:
            classes = cl
    ids = list(all_scores[0].keys())
    for entries in all_scores[1:]:
        if set(entries.keys()) != set(ids):
            raise DataError("score files cover different sample ids")
    predictions = {}
    for sid in ids:
        vectors = [
            cls.ScoreVector(entries[sid], f"file{i}")
            for i, entries in enumerate(all_scores)
        ]
        _, idx = cls.fuse_scores(vectors, rule)
        predictions[sid] = idx
    return predictions, classes


def _accuracy(predictions, classes, labels):
    correct = 0
    for sid, idx in predictions.items():
        if sid not in labels:
            raise DataError(f"no label for sample {sid}")
        predicted = int(classes[idx]) if classes else idx
        correct += int(predicted == labels[sid])
    return correct / len(predictions)


def cmd_fuse(args):
    predictions, classes = _fuse_files(args.scores, args.rule)
    with open(args.out, "w", encoding="utf-8") as fh:
        for sid in predictions:
            predicted = int(classes[predictions[sid]]) if classes else predictions[sid]
            fh.write(f"{sid} {predicted}\n")
    msg = f"[fuse] rule={args.rule} {len(predictions)} predictions -> {args.out}"
    if args.labels:
        labels = dict(_read_index(args.labels))
        acc = _accuracy(predictions, classes, labels)
        msg += f" accuracy={acc:.4f}"
    print(msg)
    return 0


def _single_channel_accuracy(score_path, labels):
    entries, classes = cls.read_scores(score_path)
    correct = 0
    for sid, scores in entries.items():
        idx = int(np.argmax(scores))
        predicted = int(classes[idx]) if classes else idx
        correct += int(predicted == labels[sid])
    return correct / len(entries)


def _evaluate(scores_dir, labels):
    files = sorted(f for f in os.listdir(scores_dir) if f.endswith(".scores.txt"))
    if len(files) < 1:
        raise DataError(f"no .scores.txt files in {scores_dir}")
    rows = []
    for f in files:
        tag = f[: -len(".scores.txt")]
        acc = _single_channel_accuracy(os.path.join(scores_dir, f), labels)
        rows.append((f"SFAM-{tag}", acc))
    fusion = {}
    if len(files) >= 2:
        paths = [os.path.join(scores_dir, f) for f in files]
        for rule in ("max", "average", "multiply"):
            predictions, classes = _fuse_files(paths, rule)
            fusion[rule] = _accuracy(predictions, classes, labels)
    return rows, fusion


def _format_report(rows, fusion):
    lines = [f"{'Channel':<30}Accuracy"]
    for name, acc in rows:
        lines.append(f"{name:<30}{acc * 100:6.2f}%")
    for rule in ("max", "average", "multiply"):
        if rule in fusion:
            name = f"{rule.capitalize()}-Score Fusion All"
            lines.append(f"{name:<30}{fusion[rule] * 100:6.2f}%")
    return "\n".join(lines) + "\n"


def cmd_eval(args):
    labels = dict(_read_index(args.labels))
    rows, fusion = _evaluate(args.scores_dir, labels)
    report = _format_report(rows, fusion)
    print(report, end="")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report)
    return 0


# ---------------------------------------------------------------------------
# pipeline


def cmd_pipeline(args):
    workdir = args.workdir
    os.makedirs(workdir, exist_ok=True)
    manifest = RunManifest(workdir)
    cfg = pdflow.SolverConfig.from_file(args.config) if args.config else pdflow.SolverConfig()
    rp_cfg = rankpool.RankPoolConfig(lam=args.lam, max_epochs=args.max_epochs)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    for v in variants:
        if v not in _VARIANT_CHOICES:
            raise DataError(f"unknown variant {v!r}")
    size = _parse_size(args.size)

    splits = ("train", "test")
    data_dirs = {s: os.path.join(workdir, "data", s) for s in splits}
    flow_dirs = {s: os.path.join(workdir, "flows", s) for s in splits}
    map_dirs = {s: os.path.join(workdir, "maps", s) for s in splits}
    models_dir = os.path.join(workdir, "models")
    scores_dir = os.path.join(workdir, "scores")

    base_config = {
        "seed": args.seed,
        "samples_per_class": args.samples_per_class,
        "size": list(size),
        "solver": asdict(cfg),
        "rankpool": {"lam": rp_cfg.lam, "max_epochs": rp_cfg.max_epochs},
        "variants": variants,
        "kind": args.kind,
    }

    def run_stage(name, inputs, outputs, fn):
        fingerprint = {
            "config": base_config,
            "stage": name,
            "inputs": _hash_tree(inputs, workdir),
        }
        if args.skip_existing and manifest.stage_is_current(name, fingerprint, outputs):
            print(f"[pipeline] {name}: up to date, skipped")
            return
        try:
            fn()
        except (DataError, NumericalError) as exc:
            raise type(exc)(f"stage {name}: {exc}") from exc
        manifest.record(name, fingerprint, outputs)
        print(f"[pipeline] {name}: done")

    # synth
    def do_synth():
        for split in splits:
            sequences = synth.generate_action_dataset(
                samples_per_class=args.samples_per_class,
                seed=substream_seed(args.seed, f"synth-{split}"),
                image_size=size,
            )
            os.makedirs(data_dirs[split], exist_ok=True)
            entries = []
            for seq in sequences:
                save_sequence(seq, os.path.join(data_dirs[split], seq.sequence_id))
                entries.append((seq.sequence_id, seq.label))
            _write_index(os.path.join(data_dirs[split], "index.txt"), entries)

    run_stage("synth", [], [data_dirs[s] for s in splits], do_synth)

    # flow
    def do_flow():
        for split in splits:
            entries = _read_index(os.path.join(data_dirs[split], "index.txt"))
            for seq_id, _ in entries:
                seq = load_sequence(
                    os.path.join(data_dirs[split], seq_id, "manifest.txt")
                )
                flows = _compute_sequence_flows(seq, cfg)
                out_dir = os.path.join(flow_dirs[split], seq_id)
                os.makedirs(out_dir, exist_ok=True)
                for t, field in enumerate(flows):
                    pdflow.write_flow(os.path.join(out_dir, f"pair_{t:04d}.sfw"), field)

    run_stage(
        "flow",
        [data_dirs[s] for s in splits],
        [flow_dirs[s] for s in splits],
        do_flow,
    )

    # encode
    def do_encode():
        for split in splits:
            entries = _read_index(os.path.join(data_dirs[split], "index.txt"))
            os.makedirs(map_dirs[split], exist_ok=True)
            for seq_id, _ in entries:
                sfms = _load_sfms(os.path.join(flow_dirs[split], seq_id))
                for variant in variants:
                    for amap in _encode_variant(sfms, variant, "both", rp_cfg):
                        png = os.path.join(
                            map_dirs[split], f"{seq_id}_{amap.variant_tag}.png"
                        )
                        enc.save_action_map(amap, png)

    run_stage(
        "encode",
        [flow_dirs[s] for s in splits],
        [map_dirs[s] for s in splits],
        do_encode,
    )

    tags = []
    for variant in variants:
        if variant in ("d", "s", "ctkrp"):
            tags.append({"d": "D", "s": "S", "ctkrp": "CTKRP"}[variant])
        else:
            base = {"rp": "RP", "amrp": "AMRP", "labrp": "LABRP"}[variant]
            tags.extend([f"{base}f", f"{base}b"])

    # train + score
    def do_train_score():
        train_entries = _read_index(os.path.join(data_dirs["train"], "index.txt"))
        test_entries = _read_index(os.path.join(data_dirs["test"], "index.txt"))
        os.makedirs(models_dir, exist_ok=True)
        os.makedirs(scores_dir, exist_ok=True)
        for tag in tags:
            maps = [
                (
                    enc.load_action_map(
                        os.path.join(map_dirs["train"], f"{seq_id}_{tag}.png")
                    ),
                    label,
                )
                for seq_id, label in train_entries
            ]
            model = cls.train_channel(
                maps, kind=args.kind, seed=substream_seed(args.seed, f"train-{tag}")
            )
            cls.save_model(os.path.join(models_dir, f"{tag}.json"), model)
            rows = _score_entries(model, map_dirs["test"], test_entries, tag)
            cls.write_scores(
                os.path.join(scores_dir, f"{tag}.scores.txt"), rows, model.classes
            )

    run_stage(
        "train",
        [map_dirs[s] for s in splits],
        [models_dir, scores_dir],
        do_train_score,
    )

    # report
    report_txt = os.path.join(workdir, "report.txt")
    report_json = os.path.join(workdir, "report.json")

    def do_report():
        labels = dict(_read_index(os.path.join(data_dirs["test"], "index.txt")))
        rows, fusion = _evaluate(scores_dir, labels)
        report = _format_report(rows, fusion)
        with open(report_txt, "w", encoding="utf-8") as fh:
            fh.write(report)
        with open(report_json, "w", encoding="utf-8") as fh:
            json.dump(
                {"channels": dict(rows), "fusion": fusion},
                fh,
                indent=2,
                sort_keys=True,
            )
            fh.write("\n")
        print(report, end="")

    run_stage("report", [scores_dir], [report_txt, report_json], do_report)
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sfam",
        description="RGB-D scene flow to action maps: calibration, flow, "
        "temporal encoding, and score fusion.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labeled synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--samples-per-class", type=int, default=5)
    p.add_argument("--num-classes", type=int, default=4)
    p.add_argument("--size", default="48", help="HxW or a single edge length")
    p.add_argument("--frames-min", type=int, default=6)
    p.add_argument("--frames-max", type=int, default=9)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate", help="estimate the depth-to-RGB homography")
    p.add_argument("--matches", required=True, help="file of x y x' y' lines")
    p.add_argument("--out", required=True)
    p.add_argument("--inlier-mask")
    p.add_argument("--threshold", type=float, default=cal.DEFAULT_INLIER_THRESHOLD)
    p.add_argument("--max-iters", type=int, default=cal.DEFAULT_RANSAC_ITERS)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("flow", help="compute scene flow for one sequence")
    p.add_argument("--sequence", required=True, help="sequence dir or manifest")
    p.add_argument("--flow-out-dir", required=True)
    p.add_argument("--config", help="solver config JSON")
    p.add_argument("--homography", help="warp depth into the RGB view first")
    p.add_argument("--remove-background", action="store_true")
    p.add_argument("--bg-tolerance", type=float, default=0.1)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("encode", help="encode flow files into action maps")
    p.add_argument("--flow-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--variant", required=True, help="comma list of " + ",".join(_VARIANT_CHOICES))
    p.add_argument("--direction", choices=("forward", "backward", "both"), default="both")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--max-epochs", type=int, default=5000)
    p.add_argument("--ctk-stack", help="stack file for the ctkrp variant")
    p.add_argument("--prefix", default="map_")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train-ctk", help="train channel transform kernels")
    p.add_argument("--dataset", required=True, help="synth dataset dir (with index.txt)")
    p.add_argument("--flow-root", required=True, help="per-sequence flow dirs")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_ctk)

    p = sub.add_parser("train-channel", help="train one classifier channel")
    p.add_argument("--maps-root", required=True)
    p.add_argument("--index", required=True, help="'seq_id label' lines")
    p.add_argument("--variant", required=True, help="exact tag, e.g. RPf")
    p.add_argument("--kind", choices=("linear-softmax", "nearest-class-mean"),
                   default="linear-softmax")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_channel)

    p = sub.add_parser("fuse", help="fuse >= 2 score files")
    p.add_argument("scores", nargs="+")
    p.add_argument("--rule", choices=cls.FUSION_RULES, default="multiply")
    p.add_argument("--out", required=True)
    p.add_argument("--labels", help="'sample_id label' lines for accuracy")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="per-channel and fused accuracy table")
    p.add_argument("--scores-dir", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="run the full synthetic pipeline")
    p.add_argument("--workdir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples-per-class", type=int, default=5)
    p.add_argument("--size", default="48")
    p.add_argument("--variants", default=DEFAULT_VARIANTS)
    p.add_argument("--kind", choices=("linear-softmax", "nearest-class-mean"),
                   default="linear-softmax")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--max-epochs", type=int, default=2000)
    p.add_argument("--config", help="solver config JSON")
    p.add_argument("--skip-existing", action="store_true")
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, FileNotFoundError) as exc:
        print(f"[{args.command}] data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"[{args.command}] numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
