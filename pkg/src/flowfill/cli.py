"""Command-line runner.

Every command writes into an output directory (``--out``, else
``$FLOWFILL_OUT``, else ``./flowfill-runs``) and echoes its full configuration
at the top of each artifact.  Contract violations exit with status 1, usage
errors with status 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import runner
from .config import RunConfig
from .evaluation import duration_scores, sample_fsd, tts_trials
from .metrics import METRIC_HEADER, PhoneRecognizer, style_similarity
from .numeric.autodiff import ShapeError
from .ode import SWEEP_HEADER, SolverConfig, nfe_sweep
from .reports import read_config_echo, write_csv, write_svg
from .synth import Dataset, _pack, bare_words, generate_dataset, load_dataset, save_dataset
from .tasks import EditSpec, Infiller, TaskRequest, TaskResult, corrupt_span

OUT_ENV = "FLOWFILL_OUT"
OUTPUTS_MAGIC = "FLOWFILL-OUTPUTS"
OUTPUTS_VERSION = 1

log = logging.getLogger("flowfill")


class ContractError(ValueError):
    pass


# -- configuration ---------------------------------------------------------


def _base_config(args) -> RunConfig:
    if args.config:
        echo = read_config_echo(args.config) if not str(args.config).endswith(".json") else json.loads(Path(args.config).read_text())
        echo = echo.get("run_config", echo)
        cfg = RunConfig.from_dict(echo)
    else:
        cfg = RunConfig.desk() if args.preset == "desk" else RunConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _out_dir(args) -> Path:
    root = Path(args.out or os.environ.get(OUT_ENV, "flowfill-runs"))
    root.mkdir(parents=True, exist_ok=True)
    return root


def _echo(cfg: RunConfig, args) -> dict:
    skip = {"func", "out", "config", "preset", "verbose"}
    return {"run_config": cfg.to_dict(), "command": args.command, "args": {k: v for k, v in vars(args).items() if k not in skip}}


# -- shared loaders --------------------------------------------------------


def _load_models(args) -> tuple[Infiller, RunConfig]:
    infiller, cfg, _ = runner.load_models(args.models)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if "alpha" in vars(args) and args.alpha is None:
        args.alpha = cfg.alpha
    if isinstance(vars(args).get("nfe"), int):
        infiller.solver = SolverConfig.for_nfe(args.nfe, cfg_alpha=args.alpha)
    return infiller, cfg


def _load_data(path) -> Dataset:
    ds = load_dataset(path)
    if len(ds) == 0:
        raise ContractError(f"{path}: dataset is empty")
    return ds


def _index(ds: Dataset, i: int, what: str) -> int:
    if not 0 <= i < len(ds):
        raise ContractError(f"{what} index {i} outside dataset of {len(ds)} utterances")
    return i


def _write_outputs(path: Path, echo: dict, results: list[TaskResult], infiller: Infiller) -> Path:
    header = {"magic": OUTPUTS_MAGIC, "version": OUTPUTS_VERSION, "config": echo}
    with open(path, "w") as f:
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for k, r in enumerate(results):
            row = {
                "index": k,
                "x": _pack(r.x),
                "z": infiller.phones.to_names(r.z),
                "durations": None if r.durations is None else [int(v) for v in r.durations],
                "nfe": r.nfe,
            }
            f.write(json.dumps(row, sort_keys=True) + "\n")
    return path


def _summary_rows(results, ds: Dataset, refs) -> list[dict]:
    rec = PhoneRecognizer(ds.process, ds.normalizer)
    rows = []
    for k, r in enumerate(results):
        row = {"index": k, "frames": len(r.x), "nfe": r.nfe, "phone_error": rec.error_rate(r.x, r.z)}
        row["style_sim_ref"] = "" if refs is None else style_similarity(r.x, ds[refs[k]].x)
        rows.append(row)
    return rows


def _finish_task(args, cfg, infiller, ds, requests, refs) -> int:
    results = infiller.run(requests)
    out = _out_dir(args)
    echo = _echo(cfg, args)
    _write_outputs(out / f"{args.command}_outputs.jsonl", echo, results, infiller)
    cols = ("index", "frames", "nfe", "phone_error", "style_sim_ref")
    write_csv(out / f"{args.command}_summary.csv", _summary_rows(results, ds, refs), cols, echo, args.command)
    print(f"wrote {len(results)} outputs to {out}")
    return 0


# -- commands --------------------------------------------------------------


def cmd_gen_data(args) -> int:
    cfg = _base_config(args)
    cfg = replace(cfg, n_train=args.n, data_seed=cfg.data_seed if args.seed is None else args.seed)
    ds = runner.make_dataset(cfg)
    path = _out_dir(args) / (args.name or "dataset.jsonl")
    save_dataset(path, ds, _echo(cfg, args))
    print(f"wrote {len(ds)} utterances to {path}")
    return 0


def cmd_train(args) -> int:
    cfg = _base_config(args)
    if args.steps is not None:
        cfg = replace(cfg, audio_train=replace(cfg.audio_train, steps=args.steps))
    if args.duration_steps is not None:
        cfg = replace(cfg, duration_train=replace(cfg.duration_train, steps=args.duration_steps))
    if args.lr is not None:
        cfg = replace(cfg, audio_train=replace(cfg.audio_train, lr=args.lr), duration_train=replace(cfg.duration_train, lr=args.lr))
    if args.dim is not None or args.layers is not None:
        net = cfg.audio_net
        dim = args.dim or net.dim
        cfg = replace(cfg, audio_net=replace(net, dim=dim, ffn_width=2 * dim, layers=args.layers or net.layers))
    if args.all_frames:
        cfg = replace(cfg, audio_train=replace(cfg.audio_train, masked_loss=False))
    ds = _load_data(args.data) if args.data else runner.make_dataset(cfg)
    models = runner.build_models(cfg, ds.phones.size)
    out = _out_dir(args)
    outcome = runner.train(models, ds, cfg, out, on_log=lambda name, step, loss: log.info("%s step %d loss %.5f", name, step, loss))
    for name, tl in outcome.logs.items():
        print(f"{name}: loss {tl.losses[0]:.4f} -> {tl.losses[-1]:.4f}")
    print(f"checkpoints in {out}")
    return 0


def cmd_sample(args) -> int:
    infiller, cfg = _load_models(args)
    ds = _load_data(args.data)
    reqs = [
        TaskRequest("sample", target_text=bare_words(ds[k % len(ds)].alignment), alpha=args.alpha, seed=int(s))
        for k, s in enumerate(runner.seeds_for(cfg, args.n))
    ]
    return _finish_task(args, cfg, infiller, ds, reqs, None)


def cmd_tts(args) -> int:
    infiller, cfg = _load_models(args)
    ds = _load_data(args.data)
    ref, tgt = _index(ds, args.ref, "reference"), _index(ds, args.target, "target")
    reqs = [
        TaskRequest("zs_tts", reference_x=ds[ref].x, reference=ds[ref].alignment, target_text=bare_words(ds[tgt].alignment), alpha=args.alpha, seed=int(s))
        for s in runner.seeds_for(cfg, args.n)
    ]
    return _finish_task(args, cfg, infiller, ds, reqs, [ref] * args.n)


def cmd_transfer(args) -> int:
    infiller, cfg = _load_models(args)
    ds = _load_data(args.data)
    ref, tgt = _index(ds, args.ref, "reference"), _index(ds, args.target, "target")
    reqs = [
        TaskRequest("style_transfer", reference_x=ds[ref].x, reference=ds[ref].alignment, target_z=ds[tgt].frame_ids(ds.phones), alpha=args.alpha, seed=int(s))
        for s in runner.seeds_for(cfg, args.n)
    ]
    return _finish_task(args, cfg, infiller, ds, reqs, [ref] * args.n)


def cmd_denoise(args) -> int:
    infiller, cfg = _load_models(args)
    ds = _load_data(args.data)
    ref = _index(ds, args.ref, "reference")
    span = _span(args.span, ds[ref].num_frames)
    noisy = corrupt_span(ds[ref].x, span, args.snr, cfg.seed)
    reqs = [
        TaskRequest("denoise", reference_x=noisy, reference=ds[ref].alignment, noise_span=span, alpha=args.alpha, seed=int(s))
        for s in runner.seeds_for(cfg, args.n)
    ]
    return _finish_task(args, cfg, infiller, ds, reqs, [ref] * args.n)


def cmd_edit(args) -> int:
    infiller, cfg = _load_models(args)
    ds = _load_data(args.data)
    ref = _index(ds, args.ref, "reference")
    first, last = _span(args.words, len(ds[ref].alignment.word_spans()))
    words = [list(w) for w in args.new.split()]
    bad = sorted({p for w in words for p in w} - set(ds.process.phones.base))
    if bad:
        raise ContractError(f"unknown phones in replacement text: {bad}")
    spec = EditSpec.for_words(ds[ref].alignment, first, last - 1, words)
    reqs = [
        TaskRequest("edit", reference_x=ds[ref].x, reference=ds[ref].alignment, edit=spec, alpha=args.alpha, seed=int(s))
        for s in runner.seeds_for(cfg, args.n)
    ]
    return _finish_task(args, cfg, infiller, ds, reqs, [ref] * args.n)


def cmd_shuffle(args) -> int:
    infiller, cfg = _load_models(args)
    ds = _load_data(args.data)
    tgt = _index(ds, args.target, "target")
    reqs = [
        TaskRequest("style_shuffle", target_z=ds[tgt].frame_ids(ds.phones), alpha=args.alpha, seed=int(s))
        for s in runner.seeds_for(cfg, args.n)
    ]
    return _finish_task(args, cfg, infiller, ds, reqs, None)


def cmd_eval(args) -> int:
    infiller, cfg = _load_models(args)
    ds = _load_data(args.data)
    trials = tts_trials(infiller, ds, args.n, alpha=args.alpha, seed=cfg.seed)
    rows = [
        {"metric": "style_win_rate", "split": "tts", "value": trials.win_rate, "n": args.n},
        {"metric": "style_sim_prompt", "split": "tts", "value": float(trials.sim_prompt.mean()), "n": args.n},
        {"metric": "phone_error_rate", "split": "tts", "value": trials.phone_error_rate, "n": args.n},
    ]
    if args.n >= 32 and len(ds) >= 32:
        rows.append({"metric": "fsd_analog", "split": "sample", "value": sample_fsd(infiller, ds, args.n, seed=cfg.seed), "n": args.n})
    if infiller.duration is not None:
        for name, value in duration_scores(infiller.duration, ds, seed=cfg.seed).items():
            rows.append({"metric": name, "split": "duration", "value": value, "n": len(ds)})
    path = write_csv(_out_dir(args) / "metrics.csv", rows, METRIC_HEADER, _echo(cfg, args), "eval")
    for row in rows:
        print(f"{row['metric']:>18s} {row['value']:.4f}")
    print(f"wrote {path}")
    return 0


def cmd_sweep(args) -> int:
    infiller, cfg = _load_models(args)
    ds = _load_data(args.data)
    nfes = _int_list(args.nfe)
    alphas = _float_list(args.alpha_list)

    def generate(solver):
        return tts_trials(infiller, ds, args.n, alpha=solver.cfg_alpha, solver=solver, seed=cfg.seed)

    rows = nfe_sweep(generate, nfes, alphas, {"style_sim": lambda t: float(t.sim_prompt.mean())})
    out = _out_dir(args)
    echo = _echo(cfg, args)
    write_csv(out / "sweep.csv", rows, SWEEP_HEADER, echo, "sweep")
    series = {f"alpha={a:g}": ([r["nfe"] for r in rows if r["alpha"] == a], [r["value"] for r in rows if r["alpha"] == a]) for a in alphas}
    write_svg(out / "sweep.svg", series, "style similarity vs NFE", "NFE", "style similarity", echo, "sweep")
    print(f"wrote {len(rows)} rows to {out / 'sweep.csv'}")
    return 0


def cmd_ablate_mask_loss(args) -> int:
    cfg = _base_config(args)
    if args.steps is not None:
        cfg = replace(cfg, audio_train=replace(cfg.audio_train, steps=args.steps))
    ds = _load_data(args.data) if args.data else runner.make_dataset(cfg)
    test = generate_dataset(cfg.data, max(args.n, 2), seed=cfg.data_seed + 7919, normalizer=ds.normalizer)
    base = runner.build_models(cfg, ds.phones.size)
    duration = base["duration"]
    runner.train({"duration": duration}, ds, cfg)
    solver = SolverConfig(step_size=args.step_size)
    rows, means = [], {}
    out = _out_dir(args)
    for masked in (True, False):
        run_cfg = replace(cfg, audio_train=replace(cfg.audio_train, masked_loss=masked))
        audio = runner.build_models(run_cfg, ds.phones.size)["audio"]
        name = "masked" if masked else "all"
        outcome = runner.train({"audio": audio}, ds, run_cfg, out / name)
        infiller = Infiller(audio, duration, ds.phones, solver=solver)
        trials = tts_trials(infiller, test, args.n, alpha=cfg.alpha, solver=solver, seed=cfg.seed)
        means[name] = float(trials.sim_prompt.mean())
        rows.append({"loss": name, "seed": cfg.seed, "style_sim": means[name], "win_rate": trials.win_rate,
                     "phone_error": trials.phone_error_rate, "final_loss": outcome.logs["audio"].losses[-1]})
    rows.append({"loss": "masked-minus-all", "seed": cfg.seed, "style_sim": means["masked"] - means["all"],
                 "win_rate": "", "phone_error": "", "final_loss": ""})
    write_csv(out / "ablation.csv", rows, ("loss", "seed", "style_sim", "win_rate", "phone_error", "final_loss"), _echo(cfg, args), "ablate-mask-loss")
    verdict = "masked >= all" if means["masked"] >= means["all"] else "masked < all"
    print(f"style similarity: masked {means['masked']:.4f}, all-frame {means['all']:.4f} ({verdict})")
    return 0


# -- parsing helpers -------------------------------------------------------


def _span(text: str, limit: int) -> tuple[int, int]:
    try:
        a, b = (int(v) for v in text.split(":"))
    except ValueError:
        raise ContractError(f"span {text!r} must look like START:END") from None
    if not 0 <= a < b <= limit:
        raise ContractError(f"span {a}:{b} is empty or outside 0:{limit}")
    return a, b


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise ContractError(f"expected a comma-separated integer list, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError:
        raise ContractError(f"expected a comma-separated number list, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowfill", description="Flow-matching infilling on toy speech.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help_text, models=False, data=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./flowfill-runs)")
        p.add_argument("--seed", type=int)
        if models:
            p.add_argument("--models", required=True, help="directory written by `train`")
        else:
            p.add_argument("--config", help="JSON run config or any artifact carrying a config echo")
            p.add_argument("--preset", choices=("desk", "reference"), default="desk")
        if data:
            p.add_argument("--data", required=True, help="dataset file from `gen-data`")
        p.set_defaults(func=func)
        return p

    p = command("gen-data", cmd_gen_data, "generate a toy dataset")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--name")

    p = command("train", cmd_train, "train audio and duration models")
    p.add_argument("--data")
    p.add_argument("--steps", type=int)
    p.add_argument("--duration-steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--all-frames", action="store_true", help="regress the field on every frame, not only masked ones")

    for name, func, help_text in (
        ("sample", cmd_sample, "diverse samples for dataset texts, no audio context"),
        ("tts", cmd_tts, "zero-shot TTS: text of --target in the style of --ref"),
        ("transfer", cmd_transfer, "re-voice the alignment of --target in the style of --ref"),
        ("denoise", cmd_denoise, "corrupt a span of --ref and regenerate it"),
        ("edit", cmd_edit, "replace words of --ref"),
        ("shuffle", cmd_shuffle, "new styles for the alignment of --target"),
    ):
        p = command(name, func, help_text, models=True, data=True)
        p.add_argument("--n", type=int, default=1)
        p.add_argument("--alpha", type=float)
        p.add_argument("--nfe", type=int)
        if name in ("tts", "transfer", "denoise", "edit"):
            p.add_argument("--ref", type=int, default=0)
        if name in ("tts", "transfer", "shuffle"):
            p.add_argument("--target", type=int, default=1)
        if name == "denoise":
            p.add_argument("--span", required=True, help="frames START:END")
            p.add_argument("--snr", type=float, default=0.0, help="corruption SNR in dB")
        if name == "edit":
            p.add_argument("--words", required=True, help="word indices START:END (END exclusive)")
            p.add_argument("--new", required=True, help="replacement words, e.g. 'ABC DE'")

    p = command("eval", cmd_eval, "zero-shot TTS, sampling and duration metrics", models=True, data=True)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--alpha", type=float)

    p = command("sweep", cmd_sweep, "metric and wall time over NFE x guidance", models=True, data=True)
    p.add_argument("--nfe", default="2,4,8,16,32")
    p.add_argument("--alpha", dest="alpha_list", default="0,0.3,0.7,1.0")
    p.add_argument("--n", type=int, default=16)

    p = command("ablate-mask-loss", cmd_ablate_mask_loss, "masked vs all-frame loss on zero-shot TTS")
    p.add_argument("--data")
    p.add_argument("--steps", type=int)
    p.add_argument("--n", type=int, default=60)
    p.add_argument("--step-size", type=float, default=0.125)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ContractError, ShapeError, ValueError, FileNotFoundError, KeyError) as e:
        print(f"flowfill {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
