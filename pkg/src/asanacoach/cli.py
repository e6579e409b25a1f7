"""Operator command line: synthesize data, train, evaluate, analyze logs,
quantize/prune models, benchmark, serve, and spot-check single frames."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import biomech, edge_opt, model, synth
from .config import load_server_config
from .errors import EngineError
from .evaluator import evaluate_posture, load_reference_poses
from .ingest import normalize, parse_frame
from .pipeline import PipelineConfig, SessionPipeline
from .sessionlog import replay


class Settings:
    def __init__(self, config_path, seed, verbose, as_json):
        self.config_path = config_path
        self.seed = seed
        self.verbose = verbose
        self.as_json = as_json

    def emit(self, record: dict, text: str) -> None:
        if self.as_json:
            click.echo(json.dumps(record, separators=(",", ":")))
        else:
            click.echo(text)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="Server/engine config file (JSON); also via $ASANA_CONFIG.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--verbose", is_flag=True)
@click.option("--json", "as_json", is_flag=True, help="One JSON record per result line.")
@click.pass_context
def main(ctx, config_path, seed, verbose, as_json):
    """Real-time yoga posture analysis engine."""
    ctx.obj = Settings(config_path, seed, verbose, as_json)


@main.command("synth")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--classes", default=5, show_default=True)
@click.option("--samples-per-class", default=100, show_default=True)
@click.option("--frames", default=30, show_default=True)
@click.option("--noise-deg", default=3.0, show_default=True)
@click.pass_obj
def synth_cmd(st: Settings, out_dir, classes, samples_per_class, frames, noise_deg):
    """Generate a synthetic dataset (.kpjsonl frames + label sidecar)."""
    dataset = synth.make_dataset(
        num_classes=classes,
        samples_per_class=samples_per_class,
        frames=frames,
        noise_deg=noise_deg,
        seed=st.seed,
    )
    frames_path, sidecar_path = synth.export_dataset(dataset, out_dir)
    st.emit(
        {
            "event": "synth",
            "samples": len(dataset.samples),
            "classes": list(dataset.class_names),
            "frames_path": str(frames_path),
            "sidecar_path": str(sidecar_path),
        },
        f"wrote {len(dataset.samples)} samples "
        f"({classes} classes x {samples_per_class}) to {frames_path}",
    )


@main.command("train")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--epochs", default=50, show_default=True)
@click.option("--batch-size", default=32, show_default=True)
@click.option("--learning-rate", default=0.001, show_default=True)
@click.option("--conv-channels", default=16, show_default=True)
@click.option("--hidden", default=32, show_default=True)
@click.pass_obj
def train_cmd(st: Settings, data_dir, out_path, epochs, batch_size, learning_rate,
              conv_channels, hidden):
    """Train on a dataset directory; prints per-epoch history."""
    dataset = synth.load_dataset(data_dir)
    config = model.TrainConfig(
        learning_rate=learning_rate,
        batch_size=batch_size,
        epochs=epochs,
        seed=st.seed,
        conv_channels=conv_channels,
        hidden=hidden,
    )
    params, history = model.train(dataset, config)
    for row in history.epochs:
        st.emit(
            {
                "event": "epoch",
                "epoch": row.epoch,
                "train_loss": row.train_loss,
                "train_accuracy": row.train_accuracy,
                "val_loss": row.val_loss,
                "val_accuracy": row.val_accuracy,
            },
            f"epoch {row.epoch:3d}  train_loss {row.train_loss:.4f}  "
            f"train_acc {row.train_accuracy:.4f}  val_loss {row.val_loss:.4f}  "
            f"val_acc {row.val_accuracy:.4f}",
        )
    test_samples = [dataset.samples[i] for i in history.test_indices]
    metrics = model.evaluate(params, test_samples)
    model.save_model(out_path, params, dataset.class_names)
    st.emit(
        {
            "event": "trained",
            "best_epoch": history.best_epoch,
            "test_accuracy": metrics.accuracy,
            "model_path": str(out_path),
        },
        f"best epoch {history.best_epoch}; test accuracy {metrics.accuracy:.4f}; "
        f"saved {out_path}",
    )


def _print_metrics(st: Settings, metrics: model.Metrics, class_names):
    if st.as_json:
        st.emit(
            {
                "event": "metrics",
                "accuracy": metrics.accuracy,
                "precision": metrics.precision.tolist(),
                "recall": metrics.recall.tolist(),
                "f1": metrics.f1.tolist(),
                "macro_precision": metrics.macro_precision,
                "macro_recall": metrics.macro_recall,
                "macro_f1": metrics.macro_f1,
                "confusion": metrics.confusion.tolist(),
            },
            "",
        )
        return
    click.echo(f"accuracy {metrics.accuracy:.4f}")
    click.echo(f"{'class':<14}{'precision':>10}{'recall':>10}{'f1':>10}")
    for i, name in enumerate(class_names):
        click.echo(
            f"{name:<14}{metrics.precision[i]:>10.4f}"
            f"{metrics.recall[i]:>10.4f}{metrics.f1[i]:>10.4f}"
        )
    click.echo(
        f"{'macro':<14}{metrics.macro_precision:>10.4f}"
        f"{metrics.macro_recall:>10.4f}{metrics.macro_f1:>10.4f}"
    )
    click.echo("confusion (rows=true, cols=predicted):")
    for row in metrics.confusion:
        click.echo("  " + " ".join(f"{v:4d}" for v in row))


@main.command("eval")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--split", default="test", show_default=True,
              type=click.Choice(["train", "val", "test", "all"]))
@click.pass_obj
def eval_cmd(st: Settings, model_path, data_dir, split):
    """Evaluate a model on a dataset split (split derived from --seed)."""
    params, meta = model.load_model(model_path)
    if meta.variant != "float":
        params = params.dequantized()
    dataset = synth.load_dataset(data_dir)
    samples = list(dataset.samples)
    if split != "all":
        tr, va, te = model.split_indices(len(samples), (0.70, 0.15, 0.15), st.seed)
        chosen = {"train": tr, "val": va, "test": te}[split]
        samples = [samples[i] for i in chosen]
    metrics = model.evaluate(params, samples)
    _print_metrics(st, metrics, dataset.class_names)


@main.command("analyze")
@click.option("--log", "log_path", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", default=None, type=click.Path(exists=True),
              help="Override the model path recorded in the log header.")
@click.option("--poses", "poses_path", default=None, type=click.Path(exists=True))
@click.pass_obj
def analyze_cmd(st: Settings, log_path, model_path, poses_path):
    """Replay a session log offline; verifies it matches the live outputs."""
    result = replay(log_path, model_path=model_path, poses_path=poses_path)
    for frame_outputs in result.outputs:
        for record in frame_outputs:
            if record["type"] == "evaluation":
                flagged = [j["name"] for j in record["joints"] if j["flagged"]]
                st.emit(
                    {
                        "event": "frame",
                        "frame_id": record["frame_id"],
                        "score": record["score"],
                        "flagged": flagged,
                    },
                    f"frame {record['frame_id']:6d}  score {record['score']:.4f}"
                    + (f"  flags: {', '.join(flagged)}" if flagged else ""),
                )
    s = result.summary
    st.emit(
        {"event": "summary", **{k: v for k, v in s.items() if k != "type"}},
        f"frames {s['frames']}  drops {s['drops']}  "
        f"mean_score {s['mean_score'] if s['mean_score'] is None else round(s['mean_score'], 4)}  "
        f"min_score {s['min_score'] if s['min_score'] is None else round(s['min_score'], 4)}",
    )
    if result.matches_log:
        st.emit({"event": "replay", "matches_log": True}, "replay matches log: yes")
    else:
        st.emit(
            {
                "event": "replay",
                "matches_log": False,
                "mismatched_frames": [m.frame_index for m in result.mismatches],
                "summary_matches": result.summary_matches,
            },
            f"replay matches log: NO ({len(result.mismatches)} mismatched frames, "
            f"summary_matches={result.summary_matches})",
        )
        sys.exit(1)


@main.command("quantize")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_obj
def quantize_cmd(st: Settings, model_path, out_path):
    """Post-training int8 weight quantization."""
    params, meta = model.load_model(model_path)
    if meta.variant != "float":
        raise EngineError("model is already quantized")
    qparams = edge_opt.quantize(params)
    model.save_model(
        out_path,
        params,
        meta.class_names,
        variant="quantized",
        angle_table_version=meta.angle_table_version,
        tensor_payload=qparams.payload(),
    )
    st.emit(
        {"event": "quantized", "model_path": str(out_path)},
        f"saved quantized model to {out_path}",
    )


@main.command("prune")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--fraction", required=True, type=float)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_obj
def prune_cmd(st: Settings, model_path, fraction, out_path):
    """Magnitude-prune the smallest weights per tensor."""
    params, meta = model.load_model(model_path)
    if meta.variant != "float":
        raise EngineError("pruning expects a float model")
    pruned = edge_opt.prune(params, fraction)
    model.save_model(
        out_path, pruned, meta.class_names, angle_table_version=meta.angle_table_version
    )
    sp = edge_opt.sparsity(pruned)
    st.emit(
        {"event": "pruned", "fraction": fraction, "sparsity": sp,
         "model_path": str(out_path)},
        f"saved pruned model (p={fraction}) to {out_path}",
    )


def _build_pipeline(pose_id, model_path, variant, poses_path=None) -> SessionPipeline:
    poses = load_reference_poses(poses_path)
    if pose_id not in poses:
        raise EngineError(f"unknown pose {pose_id!r}")
    params = None
    class_names: tuple[str, ...] = ()
    if model_path:
        loaded, meta = model.load_model(model_path)
        class_names = meta.class_names
        if variant == "quantized" and not isinstance(loaded, edge_opt.QuantizedParams):
            loaded = edge_opt.quantize(loaded)
        elif variant == "float" and isinstance(loaded, edge_opt.QuantizedParams):
            raise EngineError("container holds a quantized model; use --variant quantized")
        params = loaded
    return SessionPipeline(
        PipelineConfig(
            pose=poses[pose_id], params=params, class_names=class_names, variant=variant
        )
    )


@main.command("bench")
@click.option("--log", "log_path", required=True, type=click.Path(exists=True),
              help=".kpjsonl frame file to replay.")
@click.option("--pose", "pose_id", required=True)
@click.option("--model", "model_path", default=None, type=click.Path(exists=True))
@click.option("--variant", default="float", show_default=True,
              type=click.Choice(["float", "quantized"]))
@click.pass_obj
def bench_cmd(st: Settings, log_path, pose_id, model_path, variant):
    """Per-stage and end-to-end frame latency over a recorded session."""
    pipeline = _build_pipeline(pose_id, model_path, variant)
    with open(log_path, "r", encoding="utf-8") as fh:
        records = [line for line in (l.strip() for l in fh) if line]
    report = edge_opt.bench(pipeline, records)
    if st.as_json:
        st.emit({"event": "bench", **report.to_dict()}, "")
    else:
        click.echo(report.format_text())


@main.command("pose-check")
@click.option("--frame", "frame_path", required=True, type=click.Path(exists=True),
              help="File whose first line is a .kpjsonl record.")
@click.option("--pose", "pose_id", required=True)
@click.option("--poses", "poses_path", default=None, type=click.Path(exists=True))
@click.pass_obj
def pose_check_cmd(st: Settings, frame_path, pose_id, poses_path):
    """Score a single frame against a reference pose."""
    poses = load_reference_poses(poses_path)
    if pose_id not in poses:
        raise EngineError(f"unknown pose {pose_id!r}")
    ref = poses[pose_id]
    with open(frame_path, "r", encoding="utf-8") as fh:
        line = fh.readline().strip()
    frame = parse_frame(line)
    features = biomech.extract_features(normalize(frame))
    report = evaluate_posture(features, ref)
    if st.as_json:
        st.emit(
            {
                "event": "pose_check",
                "pose_id": report.pose_id,
                "score": report.score,
                "joints": [
                    {
                        "name": j.name,
                        "signed_deviation_deg": j.signed_deviation_deg,
                        "deviation_deg": j.deviation_deg,
                        "masked": j.masked,
                        "flagged": j.flagged,
                    }
                    for j in report.joints
                ],
            },
            "",
        )
        return
    click.echo(f"pose: {ref.display_name} ({report.pose_id})")
    click.echo(f"score: {report.score:.4f}")
    click.echo(f"{'joint':<16}{'measured-ref':>14}{'|dev|':>10}  status")
    for j in report.joints:
        status = "masked" if j.masked else ("FLAG" if j.flagged else "ok")
        click.echo(
            f"{j.name:<16}{j.signed_deviation_deg:>+14.2f}{j.deviation_deg:>10.2f}  {status}"
        )


@main.command("serve")
@click.option("--host", default=None)
@click.option("--port", default=None, type=int)
@click.option("--model", "model_path", default=None, type=click.Path(exists=True))
@click.option("--log-dir", default=None, type=click.Path())
@click.option("--static", "static_dir", default=None, type=click.Path(exists=True),
              help="Serve a built web client from this directory.")
@click.pass_obj
def serve_cmd(st: Settings, host, port, model_path, log_dir, static_dir):
    """Run the streaming session server."""
    from .service import run_server

    config = load_server_config(st.config_path)
    if host is not None:
        config.host = host
    if port is not None:
        config.port = port
    if model_path is not None:
        config.model_path = model_path
    if log_dir is not None:
        config.log_dir = log_dir
    if static_dir is not None:
        config.static_dir = static_dir
    run_server(config)


def entrypoint():
    try:
        main(standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.exceptions.Abort:
        sys.exit(130)
    except EngineError as exc:
        click.echo(f"error: {exc.code}: {exc.detail}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    entrypoint()
