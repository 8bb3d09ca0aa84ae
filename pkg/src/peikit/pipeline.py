"""End-to-end orchestration: build the ecosystem, run attack stages,
persist and reload artifacts.

One service is built per zoo encoder (that encoder hidden inside it), all
sharing the downstream dataset.  Objective samples are fresh draws from
the dataset generator family under a dedicated seed stream with indices
far above any train/test index, so they never collide with service data.

Artifact directory layout:

    ecosystem/   dataset.json encoders.json services.json heads/<name>/...
    attack/      manifest.json objectives.peit samples/c<i>_o<j>_r<k>.peit
    reports/     written by the CLI report helpers
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path

import numpy as np

from .config import config_hash
from .datasets import DatasetSpec, generate_sample, generate_split
from .head import DownstreamHead, TrainConfig, accuracy, train_head
from .inference import PeiReport, indicator_similarity, run_inference
from .seeds import derive_seed
from .service import ServiceInstance
from .stealing import StealConfig, StealReport, hard_predictions, run_model_stealing
from .synthesis import AttackConfig, AttackSampleSet, BudgetLedger, synthesize_all
from .tensorio import export_png, load_tensor, save_tensor
from .zoo import ToyEncoder, ToyEncoderSpec, build_encoder

OBJECTIVE_INDEX_BASE = 10_000


@dataclass
class Ecosystem:
    config: dict
    dataset_spec: DatasetSpec
    encoders: list[ToyEncoder]
    services: list[ServiceInstance]
    train_accuracy: dict[str, float]

    def encoder(self, name: str) -> ToyEncoder:
        for enc in self.encoders:
            if enc.name == name:
                return enc
        raise KeyError(f"no encoder named {name!r}")

    def service(self, name: str) -> ServiceInstance:
        for svc in self.services:
            if svc.name == name:
                return svc
        raise KeyError(f"no service named {name!r}")


def dataset_spec_from(cfg: dict) -> DatasetSpec:
    d = cfg["dataset"]
    return DatasetSpec(
        generator=d["generator"],
        classes=d["classes"],
        train_size=d["train_size"],
        test_size=d["test_size"],
        image_shape=tuple(cfg["zoo"]["image_shape"]),
        seed=derive_seed(cfg["master_seed"], ("dataset",)),
    )


def encoder_specs_from(cfg: dict) -> list[ToyEncoderSpec]:
    shape = tuple(cfg["zoo"]["image_shape"])
    dim = cfg["zoo"]["embedding_dim"]
    return [
        ToyEncoderSpec(e["name"], e["architecture"],
                       derive_seed(cfg["master_seed"], ("enc", e["name"])),
                       shape, dim)
        for e in cfg["zoo"]["encoders"]
    ]


def train_config_from(cfg: dict) -> TrainConfig:
    h = cfg["head"]
    return TrainConfig(iterations=h["iterations"], batch_size=h["batch_size"],
                       learning_rate=h["learning_rate"], momentum=h["momentum"])


def attack_config_from(cfg: dict) -> AttackConfig:
    a = cfg["attack"]
    return AttackConfig(
        objectives_count=a["objectives_count"], replicas=a["replicas"],
        iterations=a["iterations"], directions=a["directions"],
        radius=a["radius"], step_size=a["step_size"],
        image_shape=tuple(cfg["zoo"]["image_shape"]),
    )


def head_widths_from(cfg: dict) -> tuple[int, ...]:
    return (cfg["zoo"]["embedding_dim"], *cfg["head"]["hidden_widths"],
            cfg["dataset"]["classes"])


def build_ecosystem(cfg: dict) -> Ecosystem:
    """Build encoders, train one downstream head per encoder, wrap services."""
    dspec = dataset_spec_from(cfg)
    train_images, train_labels = generate_split(dspec, "train")
    widths = head_widths_from(cfg)
    tcfg = train_config_from(cfg)
    mode = cfg["services"]["output_mode"]

    encoders, services, train_acc = [], [], {}
    for espec in encoder_specs_from(cfg):
        enc = build_encoder(espec)
        emb = enc.encode_batch(train_images)
        head = train_head(emb, train_labels, widths, tcfg,
                          derive_seed(cfg["master_seed"], ("head", enc.name)))
        train_acc[enc.name] = accuracy(head, emb, train_labels)
        encoders.append(enc)
        services.append(ServiceInstance(f"svc-{enc.name}", enc, head, mode))
    return Ecosystem(cfg, dspec, encoders, services, train_acc)


def make_objectives(cfg: dict, count: int | None = None) -> np.ndarray:
    """Objective samples: dataset-family draws from a dedicated seed stream."""
    count = count if count is not None else cfg["attack"]["objectives_count"]
    spec = DatasetSpec(
        generator=cfg["dataset"]["generator"],
        classes=cfg["dataset"]["classes"],
        train_size=cfg["dataset"]["train_size"],
        test_size=cfg["dataset"]["test_size"],
        image_shape=tuple(cfg["zoo"]["image_shape"]),
        seed=derive_seed(cfg["master_seed"], ("objectives",)),
    )
    return np.stack([generate_sample(spec, OBJECTIVE_INDEX_BASE + i)[0]
                     for i in range(count)])


def run_synthesis(cfg: dict, encoders: list[ToyEncoder],
                  attack_config: AttackConfig | None = None,
                  ledger: BudgetLedger | None = None,
                  jobs: int = 1) -> tuple[AttackSampleSet, BudgetLedger]:
    acfg = attack_config or attack_config_from(cfg)
    ledger = ledger or BudgetLedger(cfg["inference"]["price_per_query"])
    objectives = make_objectives(cfg, acfg.objectives_count)
    sset = synthesize_all(encoders, objectives, acfg,
                          derive_seed(cfg["master_seed"], ("attack",)),
                          ledger, jobs=jobs)
    return sset, ledger


def infer_services(cfg: dict, services, sample_set: AttackSampleSet,
                   leave_one_out: bool = False) -> list[PeiReport]:
    """Inference for every service; leave-one-out drops svc's own encoder."""
    threshold = cfg["inference"]["threshold"]
    fingerprint = config_hash(cfg)
    reports = []
    for svc in services:
        exclude = {svc.name.removeprefix("svc-")} if leave_one_out else None
        reports.append(run_inference(svc, sample_set, indicator_similarity,
                                     threshold, exclude, fingerprint))
    return reports


def run_steal_suite(cfg: dict, eco: Ecosystem,
                    identified_encoder: str | None = None) -> list[StealReport]:
    """All six stolen models: {soft, hard} x {correct, wrong, scratch}.

    ``identified_encoder`` is the inference verdict to steal with; defaults
    to the target service's true hidden encoder (they coincide whenever
    the attack succeeded).
    """
    s = cfg["steal"]
    target = eco.service(s["target_service"])
    hidden_name = target.name.removeprefix("svc-")
    correct = eco.encoder(identified_encoder or hidden_name)
    wrong = eco.encoder(s["wrong_candidate"])
    if wrong.name == correct.name:
        raise ValueError("wrong_candidate must differ from the stolen encoder")

    surrogate = DatasetSpec(
        generator=s["surrogate_generator"],
        classes=cfg["dataset"]["classes"],
        train_size=s["surrogate_size"],
        test_size=1,
        image_shape=tuple(cfg["zoo"]["image_shape"]),
        seed=derive_seed(cfg["master_seed"], ("surrogate",)),
    )
    tcfg = TrainConfig(iterations=s["iterations"], batch_size=s["batch_size"],
                       learning_rate=s["learning_rate"], momentum=s["momentum"])

    test_images, test_labels = generate_split(dataset_spec_from(cfg), "test")
    target_preds = hard_predictions(target, test_images)

    # a soft-mode steal needs logits; expose them on a shadow of the target
    soft_target = target if target.allows("soft") else ServiceInstance(
        target.name, target.encoder, target.head, "soft", target.transform)

    reports = []
    for mode in ("soft", "hard"):
        for kind, enc in (("correct", correct), ("wrong", wrong), ("scratch", None)):
            steal_cfg = StealConfig(
                label_mode=mode, stolen_kind=kind, surrogate=surrogate,
                train=tcfg, hidden_widths=tuple(cfg["head"]["hidden_widths"]))
            report, _ = run_model_stealing(
                soft_target if mode == "soft" else target, steal_cfg,
                encoder=enc, test_images=test_images, test_labels=test_labels,
                target_test_predictions=target_preds,
                seed=derive_seed(cfg["master_seed"], ("steal", mode, kind)))
            reports.append(report)
    return reports


# ---------------------------------------------------------------------------
# persistence


def save_ecosystem(eco: Ecosystem, outdir: str | Path) -> None:
    root = Path(outdir) / "ecosystem"
    root.mkdir(parents=True, exist_ok=True)
    (root / "dataset.json").write_text(json.dumps(eco.dataset_spec.to_json(), indent=2))
    (root / "encoders.json").write_text(json.dumps(
        [enc.spec.to_json() for enc in eco.encoders], indent=2))
    services = []
    for svc in eco.services:
        head_dir = root / "heads" / svc.name
        head_dir.mkdir(parents=True, exist_ok=True)
        for i, (w, b) in enumerate(zip(svc.head.weights, svc.head.biases)):
            save_tensor(head_dir / f"w{i}.peit", w)
            save_tensor(head_dir / f"b{i}.peit", b)
        (head_dir / "head.json").write_text(json.dumps(
            {"widths": list(svc.head.widths), "layers": len(svc.head.weights)},
            indent=2))
        services.append({"name": svc.name, "encoder": svc.encoder.name,
                         "output_mode": svc.output_mode,
                         "train_accuracy": eco.train_accuracy.get(svc.encoder.name)})
    (root / "services.json").write_text(json.dumps(services, indent=2))


def load_ecosystem(outdir: str | Path, cfg: dict) -> Ecosystem:
    root = Path(outdir) / "ecosystem"
    if not (root / "services.json").exists():
        raise FileNotFoundError(f"no built ecosystem under {outdir}")
    dspec = DatasetSpec.from_json(json.loads((root / "dataset.json").read_text()))
    encoders = [build_encoder(ToyEncoderSpec.from_json(o))
                for o in json.loads((root / "encoders.json").read_text())]
    by_name = {enc.name: enc for enc in encoders}
    services, train_acc = [], {}
    for entry in json.loads((root / "services.json").read_text()):
        head_dir = root / "heads" / entry["name"]
        meta = json.loads((head_dir / "head.json").read_text())
        weights = [load_tensor(head_dir / f"w{i}.peit") for i in range(meta["layers"])]
        biases = [load_tensor(head_dir / f"b{i}.peit") for i in range(meta["layers"])]
        head = DownstreamHead(tuple(meta["widths"]), weights, biases)
        services.append(ServiceInstance(entry["name"], by_name[entry["encoder"]],
                                        head, entry["output_mode"]))
        train_acc[entry["encoder"]] = entry.get("train_accuracy")
    return Ecosystem(cfg, dspec, encoders, services, train_acc)


def save_sample_set(sset: AttackSampleSet, outdir: str | Path,
                    ledger: BudgetLedger | None = None,
                    png: bool = False, subdir: str = "attack") -> None:
    root = Path(outdir) / subdir
    (root / "samples").mkdir(parents=True, exist_ok=True)
    save_tensor(root / "objectives.peit", sset.objectives)
    for (i, j, k), img in sorted(sset.samples.items()):
        save_tensor(root / "samples" / f"c{i}_o{j}_r{k}.peit", img)
        if png:
            png_dir = root / "png"
            png_dir.mkdir(exist_ok=True)
            export_png(png_dir / f"c{i}_o{j}_r{k}.png", img)
    manifest = {
        "config": sset.config.to_json(),
        "candidates": sset.candidate_names,
        "master_seed": sset.master_seed,
        "bypass": sset.bypass,
        "loss_traces": {f"{i}_{j}_{k}": trace
                        for (i, j, k), trace in sorted(sset.loss_traces.items())},
        "ledger": ledger.to_json() if ledger else None,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2))


def load_sample_set(outdir: str | Path, subdir: str = "attack") -> AttackSampleSet:
    root = Path(outdir) / subdir
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no attack samples under {root}")
    manifest = json.loads(manifest_path.read_text())
    acfg = AttackConfig.from_json(manifest["config"])
    names = manifest["candidates"]
    samples, traces = {}, {}
    for i in range(len(names)):
        for j in range(acfg.objectives_count):
            for k in range(acfg.replicas):
                samples[(i, j, k)] = load_tensor(root / "samples" / f"c{i}_o{j}_r{k}.peit")
                traces[(i, j, k)] = manifest["loss_traces"].get(f"{i}_{j}_{k}", [])
    return AttackSampleSet(
        config=acfg, candidate_names=names,
        objectives=load_tensor(root / "objectives.peit"),
        samples=samples, loss_traces=traces,
        master_seed=manifest["master_seed"], bypass=manifest.get("bypass"))


def ledger_from_manifest(outdir: str | Path, subdir: str = "attack") -> BudgetLedger:
    manifest = json.loads((Path(outdir) / subdir / "manifest.json").read_text())
    entry = manifest.get("ledger") or {"totals": {}, "price_per_query": "0"}
    ledger = BudgetLedger(Decimal(entry["price_per_query"]))
    for endpoint, n in sorted(entry["totals"].items()):
        ledger.record(endpoint, n)
    return ledger
