import csv
import json
import logging
import os

from config import DROP_THRESHOLD, DROP_WINDOW, LAMBDA_GRID, METRICS_FILE, P_MASK_GRID, PROBE_RIDGE, \
    PROBE_TRAIN_FRACTION
from core.baseline.Comparison import COMPARISON_HEADER, SWEEP_HEADER, compare_bert_vs_nucnorm, lambda_sweep, \
    write_rows
from core.data.Batch import BatchSampler
from core.data.DataConfig import DataConfig
from core.interp.AttentionSummary import classify_heads, export_attention, heads_with_label, record_attention, \
    structured_mask
from core.interp.EmbeddingReport import embedding_evolution, embedding_report
from core.interp.Interventions import (InterventionSpec, ablation_effect, all_heads, apply_intervention,
                                       check_permutation, head_group, negation_patch, random_permutation,
                                       switch_weights, token_intervention)
from core.interp.Probe import fit_probe
from core.manifest import write_manifest
from core.model.Checkpoint import load_checkpoint
from core.training.MetricSeries import MetricSeries
from core.training.Trainer import component_retrain, train
from core.training.Transition import detect_transition

logger = logging.getLogger(__name__)

TOKEN_VALUES = ("MASK", 0.44, -0.24)
FAMILIES = ("low-rank", "random")

# training keys a retraining run takes over from the run that produced its checkpoint
INHERITED_KEYS = set(DataConfig.__dataclass_fields__) | {"steps", "batch_size", "lr", "precision", "checkpoint_every",
                                                         "checkpoint_steps", "log_every"}


def token_value(v):  # "MASK" -> None
    return None if v is None or v == "MASK" else float(v)


def losses_dict(losses):
    return {"L": losses.L, "L_obs": losses.L_obs, "L_mask": losses.L_mask}


def data_for(checkpoint, config, **override):  # data distribution of a checkpoint's training run, then overrides
    d = {k: v for k, v in (checkpoint.train_config or {}).items() if k in DataConfig.__dataclass_fields__}
    d.update({k: v for k, v in config.params.items() if k in DataConfig.__dataclass_fields__})
    d.update(override)
    d["n"] = checkpoint.config.n
    return DataConfig.from_dict(d)


def evaluation_batch(checkpoint, config, samples=None, **override):
    data = data_for(checkpoint, config, **override)
    samples = samples or config.get("samples", 256)
    return BatchSampler(data, config.seed, samples).evaluation(config.seed, samples)


def write_json(path, payload):
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=float)
    return path


def heads_param(config, model_config, key="heads"):  # "all" or 1-indexed [layer, head] pairs
    heads = config.get(key, "all")
    if heads == "all":
        return all_heads(model_config)
    return tuple((int(l) - 1, int(h) - 1) for l, h in heads)


class Runner:  # dispatches one ExperimentConfig to the owning module and records its artifacts
    def __init__(self, config):
        self.config = config
        self.out = config.out
        self.outputs = {}

    def path(self, name):
        return os.path.join(self.out, name)

    def checkpoint(self, key="checkpoint"):
        return load_checkpoint(self.config.require(key))

    def run(self):
        handler = getattr(self, "cmd_" + self.config.command.replace("-", "_"))
        os.makedirs(self.out, exist_ok=True)
        logger.info("running %s into %s", self.config.command, self.out)
        result = handler()
        write_manifest(self.out, command=self.config.command, config=self.config.to_dict(), seed=self.config.seed,
                       outputs=self.outputs)
        return result

    # ---- training ----

    def _transition(self, series, name="transition.json"):
        window = self.config.get("window", DROP_WINDOW)
        if len(series) <= window:
            logger.info("series of %d steps is too short for drop detection (window %d)", len(series), window)
            return None
        report = detect_transition(series, window, self.config.get("threshold", DROP_THRESHOLD))
        self.outputs["transition"] = write_json(self.path(name), report.to_dict())
        return report

    def cmd_train(self):
        result = train(self.config.train_config(), self.out)
        self.outputs.update(metrics=self.path(METRICS_FILE), final=result.final_checkpoint,
                            checkpoints={str(k): v for k, v in result.checkpoints.items()})
        self._transition(result.series)
        return result

    def cmd_retrain_component(self):
        ckpt = self.checkpoint()
        components = self.config.require("components")
        inherited = {k: v for k, v in (ckpt.train_config or {}).items() if k in INHERITED_KEYS}
        base = self.config.train_config(defaults=inherited)
        result = component_retrain(ckpt, components, base, self.out)
        self.outputs.update(metrics=self.path(METRICS_FILE), final=result.final_checkpoint)
        self._transition(result.series)
        return result

    def cmd_detect_drop(self):
        series = MetricSeries.read_csv(self.config.require("metrics"))
        window = self.config.get("window", DROP_WINDOW)
        report = detect_transition(series, window, self.config.get("threshold", DROP_THRESHOLD))
        self.outputs["transition"] = write_json(self.path("transition.json"), report.to_dict())
        return report

    # ---- evaluation and baseline ----

    def cmd_eval(self):
        ckpt = self.checkpoint()
        rows = []
        for dist in self.config.get("dists", [data_for(ckpt, self.config).dist]):
            batch = evaluation_batch(ckpt, self.config, dist=dist)
            result = apply_intervention(ckpt.encoder, batch, InterventionSpec())
            rows.append({"dist": dist, **losses_dict(result.losses)})
            logger.info("%s: L=%.4g L_obs=%s L_mask=%s", dist, result.losses.L, result.losses.L_obs,
                        result.losses.L_mask)
        self.outputs["eval"] = write_json(self.path("eval.json"), rows)
        return rows

    def cmd_nucnorm(self):
        c = self.config
        rows = lambda_sweep(c.get("n", 7), c.get("r", 2), c.get("p_mask", 0.3), c.get("lambdas", LAMBDA_GRID),
                            c.get("samples", 256), c.seed, quiet=c.get("quiet", False))
        self.outputs["nucnorm"] = write_rows(self.path("nucnorm.csv"), rows, SWEEP_HEADER)
        return rows

    def cmd_compare(self):
        c = self.config
        ckpt = self.checkpoint()
        data = data_for(ckpt, c)
        ranks = c.get("ranks")
        rows = compare_bert_vs_nucnorm(ckpt, c.get("p_masks", P_MASK_GRID), c.get("samples", 256), c.seed,
                                       r=data.r, ranks=ranks, dist=data.dist, lam=c.get("lam"),
                                       quiet=c.get("quiet", False))
        header = (("rank",) if ranks else ()) + COMPARISON_HEADER
        self.outputs["comparison"] = write_rows(self.path("comparison.csv"), rows, header)
        return rows

    # ---- interventions ----

    def cmd_ablate(self):
        ckpt = self.checkpoint()
        batch = evaluation_batch(ckpt, self.config)
        groups = {}
        for name in self.config.get("groups", []):
            if name == "labelled":
                labels = classify_heads(record_attention(ckpt.encoder, data_for(ckpt, self.config),
                                                         self.config.get("samples", 256), self.config.seed))
                for label in ("row", "column", "identity", "other"):
                    if heads_with_label(labels, label):
                        groups[label] = heads_with_label(labels, label)
            else:
                groups[name] = head_group(name)
        if not groups:
            groups["selected"] = heads_param(self.config, ckpt.config)
        rows = []
        for name, heads in groups.items():
            effect = ablation_effect(ckpt.encoder, batch, heads)
            rows.append({"group": name, "heads": [[l + 1, h + 1] for l, h in heads],
                         "with": losses_dict(effect["with"]), "without": losses_dict(effect["without"]),
                         "ratio_L": effect["ratio_L"]})
            logger.info("ablating %s: L %.4g -> %.4g (x%.2f)", name, effect["without"].L, effect["with"].L,
                        effect["ratio_L"])
        self.outputs["ablation"] = write_json(self.path("ablation.json"), rows)
        return rows

    def cmd_switch(self):
        dest, src = self.checkpoint(), self.checkpoint("source")
        components = self.config.get("components", ["attention_qkv"])
        batch = evaluation_batch(dest, self.config)
        hybrid = switch_weights(dest.encoder, src.encoder, components)
        before = apply_intervention(dest.encoder, batch, InterventionSpec()).losses
        after = apply_intervention(hybrid, batch, InterventionSpec()).losses
        payload = {"components": list(components), "destination": losses_dict(before), "hybrid": losses_dict(after)}
        self.outputs["switch"] = write_json(self.path("switch.json"), payload)
        return payload

    def cmd_patch(self):
        ckpt = self.checkpoint()
        payload = negation_patch(ckpt.encoder, evaluation_batch(ckpt, self.config))
        self.outputs["patch"] = write_json(self.path("patch.json"), payload)
        return payload

    def cmd_permute_positions(self):
        ckpt = self.checkpoint()
        S = ckpt.config.seq_len
        perm = self.config.get("permutation")
        perm = random_permutation(S, self.config.seed) if perm is None else check_permutation(perm, S)
        batch = evaluation_batch(ckpt, self.config)
        base = apply_intervention(ckpt.encoder, batch, InterventionSpec()).losses
        permuted = apply_intervention(ckpt.encoder, batch, InterventionSpec("position_permutation",
                                                                            permutation=perm)).losses
        payload = {"permutation": perm.tolist(), "original": losses_dict(base), "permuted": losses_dict(permuted)}
        self.outputs["permute"] = write_json(self.path("permute.json"), payload)
        return payload

    def cmd_token_intervene(self):
        c = self.config
        paths = c.get("checkpoints") or [c.require("checkpoint")]
        rows = []
        for path in paths:
            ckpt = load_checkpoint(path)
            for family in c.get("families", FAMILIES):
                for value in c.get("values", TOKEN_VALUES):
                    res = token_intervention(ckpt.encoder, token_value(value), family, data_for(ckpt, c),
                                             c.get("samples", 256), c.seed)
                    rows.append({"step": ckpt.step, "family": family, "m": value, "L_obs": res.L_obs,
                                 "L_mask_prime": res.L_mask_prime, "mean_abs_masked": res.mean_abs_masked})
        self.outputs["token_intervention"] = write_rows(
            self.path("token_intervention.csv"), rows,
            ("step", "family", "m", "L_obs", "L_mask_prime", "mean_abs_masked"))
        return rows

    # ---- analyses ----

    def cmd_probe(self):
        c = self.config
        ckpt = self.checkpoint()
        results = []
        for target in c.get("targets", ["masked_row"]):
            kwargs = dict(target=target, layers=c.get("layers"), ridge=c.get("ridge", PROBE_RIDGE),
                          samples=c.get("samples", 512), train_fraction=c.get("train_fraction", PROBE_TRAIN_FRACTION),
                          seed=c.seed)
            results.append(fit_probe(ckpt.encoder, data_for(ckpt, c), **kwargs).to_dict())
            if c.get("canary", False):
                canary = fit_probe(ckpt.encoder, data_for(ckpt, c), shuffle_targets=True, **kwargs).to_dict()
                canary["target"] = target + "-shuffled"
                results.append(canary)
        self.outputs["probe"] = write_json(self.path("probe.json"), results)
        with open(self.path("probe.csv"), "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(("target", "layer", "train_mse", "test_mse", "cosine"))
            for r in results:
                for i, layer in enumerate(r["layers"]):
                    writer.writerow((r["target"], layer, r["train_mse"][i], r["test_mse"][i], r["cosine"][i]))
        self.outputs["probe_csv"] = self.path("probe.csv")
        return results

    def cmd_embed_report(self):
        c = self.config
        paths = c.get("checkpoints") or [c.require("checkpoint")]
        checkpoints = [load_checkpoint(p) for p in paths]
        if len(checkpoints) == 1:
            reports = [embedding_report(checkpoints[0].encoder, step=checkpoints[0].step)]
        else:
            reports = embedding_evolution(checkpoints)
        self.outputs["embeddings"] = write_json(self.path("embeddings.json"), [r.to_dict() for r in reports])
        return reports

    def cmd_attn_export(self):
        c = self.config
        paths = c.get("checkpoints") or [c.require("checkpoint")]
        exported = {}
        for path in paths:
            ckpt = load_checkpoint(path)
            mask = structured_mask(ckpt.config.n, c.get("mask")) if c.get("mask") is not None else None
            summary = record_attention(ckpt.encoder, data_for(ckpt, c), c.get("samples", 256), c.seed, mask=mask)
            summary.step = ckpt.step
            exported[str(ckpt.step)] = export_attention(summary, self.path(os.path.join("attention",
                                                                                        f"step_{ckpt.step:06d}")))
        self.outputs["attention"] = exported
        return exported

    def cmd_reproduce(self):
        from core.experiments.Suites import reproduce  # Suites imports this module
        report = reproduce(self, self.config.require("suite"))
        self.outputs["reproduce"] = write_json(self.path("reproduce.json"), report)
        return report


def run(config):
    return Runner(config).run()
