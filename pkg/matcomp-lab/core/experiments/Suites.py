import glob
import json
import logging
import os

import numpy as np
from scipy.stats import spearmanr

from config import CHECKPOINT_DIR, DROP_WINDOW, MANIFEST_FILE, METRICS_FILE, SUITE_ALIASES
from core.baseline.Comparison import compare_bert_vs_nucnorm, lambda_sweep
from core.baseline.NucNorm import NucNormProblem, single_entry_oracle, solve_constrained
from core.data.seeding import rng_for
from core.errors import ConfigError, PrerequisiteError
from core.experiments.Runner import FAMILIES, TOKEN_VALUES, data_for, evaluation_batch, token_value
from core.interp.AttentionSummary import classify_heads, heads_with_label, record_attention
from core.interp.EmbeddingReport import embedding_report
from core.interp.Interventions import (InterventionSpec, ablation_effect, all_heads, apply_intervention,
                                       head_group, negation_patch, random_permutation, switch_weights,
                                       token_intervention)
from core.interp.Probe import fit_probe
from core.model.Checkpoint import load_checkpoint
from core.training.MetricSeries import MetricSeries
from core.training.Transition import detect_transition

logger = logging.getLogger(__name__)

TOLERANCES = {
    "plateau_band": (0.8, 1.2),  # x r/9
    "final_L": 1e-2,
    "copy_loss": 5e-3,
    "ablation_pre_rel": 0.2,
    "ablation_post_factor": 10.0,
    "obs_max": 5e-3,
    "switch_rel": 0.2,
    "perm_mask_factor": 20.0,
    "perm_obs_factor": 10.0,
    "patch_ratio": 0.1,
    "nucnorm_mask_band": (0.028, 0.053),
    "nucnorm_obs_max": 2e-4,
    "exact": 1e-8,
    "oracle_rel": 1e-4,
    "probe_ratio": 0.5,
    "probe_spearman": -0.5,
    "norm_asymmetry": 0.15,
    "separability": 0.95,
    "pre_alignment": 0.8,
    "clustering_margin": 0.05,
    "ood_factor": 3.0,
    "group_ratio": 1.0,
}


class Suite:  # collects pass/fail claims for one reference result
    def __init__(self, runner, name):
        self.runner = runner
        self.config = runner.config
        self.name = name
        self.tol = {**TOLERANCES, **self.config.get("tolerances", {})}
        self.claims = []

    def claim(self, name, measured, target, passed):
        passed = bool(passed)
        self.claims.append({"claim": name, "measured": measured, "target": target, "passed": passed})
        logger.info("[%s] %s: %s (target %s) -> %s", self.name, name, measured, target, "PASS" if passed else "FAIL")

    def below(self, name, measured, bound):
        self.claim(name, measured, f"<= {bound}", measured is not None and measured <= bound)

    def above(self, name, measured, bound):
        self.claim(name, measured, f">= {bound}", measured is not None and measured >= bound)

    def within(self, name, measured, low, high):
        self.claim(name, measured, f"in [{low}, {high}]", measured is not None and low <= measured <= high)

    # ---- prerequisites ----

    def run_dir(self, key="run_dir", command="train"):
        path = self.config.get(key)
        if not path or not os.path.isfile(os.path.join(path, METRICS_FILE)):
            raise PrerequisiteError(f"a training run directory with {METRICS_FILE} (key '{key}')", command)
        return path

    def series(self, run_dir):
        return MetricSeries.read_csv(os.path.join(run_dir, METRICS_FILE))

    def checkpoint(self):  # final checkpoint, given directly or found in run_dir
        path = self.config.get("checkpoint")
        if path is None and self.config.get("run_dir"):
            path = os.path.join(self.config.get("run_dir"), CHECKPOINT_DIR, "final")
        if path is None or not os.path.isdir(path):
            raise PrerequisiteError("a final checkpoint (key 'checkpoint' or 'run_dir')", "train")
        return load_checkpoint(path)

    def pre_checkpoint(self):  # pre-drop checkpoint, given directly or the last one saved before the drop
        path = self.config.get("checkpoint_pre")
        if path is None and self.config.get("run_dir"):
            path = pre_drop_checkpoint(self.config.get("run_dir"))
        if path is None or not os.path.isdir(path):
            raise PrerequisiteError("a pre-drop checkpoint (key 'checkpoint_pre' or 'run_dir')", "train")
        return load_checkpoint(path)

    def report(self):
        passed = bool(self.claims) and all(c["passed"] for c in self.claims)  # a suite with no claims fails
        return {"suite": self.name, "passed": passed, "claims": self.claims, "tolerances": self.tol}


def run_rank(run_dir, default=2):
    try:
        with open(os.path.join(run_dir, MANIFEST_FILE)) as f:
            return int(json.load(f)["config"].get("r", default))
    except (OSError, KeyError, ValueError):
        return default


def final_loss(series, tail=100):
    return float(np.nanmean(series.column("L")[-tail:]))


def pre_drop_checkpoint(run_dir):  # newest periodic checkpoint saved before the detected drop
    steps = {}
    for path in glob.glob(os.path.join(run_dir, CHECKPOINT_DIR, "step_*")):
        steps[int(os.path.basename(path)[5:])] = path
    if not steps:
        return None
    series = MetricSeries.read_csv(os.path.join(run_dir, METRICS_FILE))
    if len(series) <= DROP_WINDOW:
        return None
    report = detect_transition(series)
    if not report.detected:
        return steps.get(4000)
    before = [s for s in steps if s <= report.drop_step - DROP_WINDOW]
    return steps[max(before)] if before else None


def relative_change(a, b):
    return abs(a - b) / abs(b) if b else float("inf")


# ---- suites ----

def check_loss_drop(s):
    run_dir = s.run_dir()
    series = s.series(run_dir)
    r = run_rank(run_dir, s.config.get("r", 2))
    report = detect_transition(series)
    s.claim("exactly one drop", report.drop_count, "== 1", report.drop_count == 1)
    low, high = s.tol["plateau_band"]
    s.within("plateau L_mask", report.plateau, low * r / 9, high * r / 9)
    s.below("final L", final_loss(series), s.tol["final_L"])


def check_vs_nucnorm(s):
    ckpt = s.checkpoint()
    rows = compare_bert_vs_nucnorm(ckpt, [0.3], s.config.get("samples", 256), s.config.seed,
                                   r=data_for(ckpt, s.config).r)
    bert, base = rows[0], rows[1]
    s.claim("bert MSE < nuclear norm MSE", bert["L"], f"< {base['L']}", bert["L"] < base["L"])
    s.claim("bert nuclear norm > baseline nuclear norm", bert["nuclear_norm"], f"> {base['nuclear_norm']}",
            bert["nuclear_norm"] > base["nuclear_norm"])


def check_copying(s):
    ckpt = s.pre_checkpoint()
    for family in FAMILIES:
        for value in TOKEN_VALUES:
            res = token_intervention(ckpt.encoder, token_value(value), family, data_for(ckpt, s.config),
                                     s.config.get("samples", 256), s.config.seed)
            s.below(f"L'_mask ({family}, m={value})", res.L_mask_prime, s.tol["copy_loss"])
            s.below(f"L_obs ({family}, m={value})", res.L_obs, s.tol["copy_loss"])


def check_pre_drop_attention(s):
    pre, post = s.pre_checkpoint(), s.checkpoint()
    batch = evaluation_batch(pre, s.config)
    effect = ablation_effect(pre.encoder, batch, all_heads(pre.config))
    for key in ("L_obs", "L_mask"):
        s.below(f"ablation change of {key} before the drop",
                relative_change(getattr(effect["with"], key), getattr(effect["without"], key)),
                s.tol["ablation_pre_rel"])
    hybrid = switch_weights(pre.encoder, post.encoder, ["attention_qkv"])
    switched = apply_intervention(hybrid, batch, InterventionSpec()).losses
    s.below("pre-drop model with final attention: L_mask change",
            relative_change(switched.L_mask, effect["without"].L_mask), s.tol["switch_rel"])


def check_post_drop_attention(s):
    post, pre = s.checkpoint(), s.pre_checkpoint()
    batch = evaluation_batch(post, s.config)
    effect = ablation_effect(post.encoder, batch, all_heads(post.config))
    s.above("ablation factor on L_mask", effect["with"].L_mask / effect["without"].L_mask,
            s.tol["ablation_post_factor"])
    s.below("ablated L_obs", effect["with"].L_obs, s.tol["obs_max"])
    hybrid = switch_weights(post.encoder, pre.encoder, ["attention_qkv"])
    s.below("final model with pre-drop attention: L_obs",
            apply_intervention(hybrid, batch, InterventionSpec()).losses.L_obs, s.tol["obs_max"])
    perm = random_permutation(post.config.seq_len, s.config.seed)
    permuted = apply_intervention(post.encoder, batch, InterventionSpec("position_permutation", permutation=perm))
    s.above("permutation factor on L_mask", permuted.losses.L_mask / effect["without"].L_mask,
            s.tol["perm_mask_factor"])
    s.below("permutation factor on L_obs", permuted.losses.L_obs / effect["without"].L_obs,
            s.tol["perm_obs_factor"])


def check_nucnorm_baseline(s):
    rows = lambda_sweep(7, 2, 0.3, [0.001], s.config.get("samples", 256), s.config.seed)
    low, high = s.tol["nucnorm_mask_band"]
    s.within("L_mask at lambda 0.001", rows[0]["L_mask"], low, high)
    s.below("L_obs at lambda 0.001", rows[0]["L_obs"], s.tol["nucnorm_obs_max"])
    rng = rng_for(s.config.seed, "baseline", 99)
    X = np.round(rng.uniform(-1, 1, (7, 2)) @ rng.uniform(-1, 1, (2, 7)), 2)
    sol = solve_constrained(NucNormProblem(X, np.ones_like(X)))
    s.below("fully observed input returned", float(np.abs(sol.U - X).max()), s.tol["exact"])
    worst = 0.0
    for k in range(20):
        size = 2 + k % 2
        X = np.round(rng.uniform(-1, 1, (size, size)), 2)
        M = np.ones_like(X)
        M[rng.integers(size), rng.integers(size)] = 0
        _, oracle = single_entry_oracle(X, M)
        solution = solve_constrained(NucNormProblem(X, M))
        worst = max(worst, relative_change(solution.objective, oracle))
    s.below("objective vs grid oracle (worst of 20)", worst, s.tol["oracle_rel"])


def check_negation(s):
    ckpt = s.checkpoint()
    res = negation_patch(ckpt.encoder, evaluation_batch(ckpt, s.config))
    s.below("masked MSE to donor / to input", res["mse_to_donor"] / res["mse_to_input"], s.tol["patch_ratio"])


def check_head_groups(s):
    ckpt = s.checkpoint()
    batch = evaluation_batch(ckpt, s.config)
    groups = {name: head_group(name) for name in s.config.get("groups", [])}
    if not groups:
        labels = classify_heads(record_attention(ckpt.encoder, data_for(ckpt, s.config),
                                                 s.config.get("samples", 256), s.config.seed))
        groups = {label: heads_with_label(labels, label) for label in ("row", "column", "identity")
                  if heads_with_label(labels, label)}
        s.above("labelled head groups found", len(groups), 1)
    for name, heads in groups.items():
        s.above(f"ablating {name} heads: ratio of L", ablation_effect(ckpt.encoder, batch, heads)["ratio_L"],
                s.tol["group_ratio"])


def check_probes(s):
    ckpt = s.checkpoint()
    data = data_for(ckpt, s.config)
    samples = s.config.get("samples", 512)
    rows = fit_probe(ckpt.encoder, data, "masked_row", samples=samples, seed=s.config.seed)
    mse = rows.test_mse  # index 0 is the embedding output
    depth = len(mse) - 1
    middle = mse[2:depth] if depth >= 3 else mse[1:]
    s.below("best intermediate / first layer masked-row probe MSE", min(middle) / mse[1], s.tol["probe_ratio"])
    element = fit_probe(ckpt.encoder, data, "element", samples=samples, seed=s.config.seed)
    rho, _ = spearmanr(element.layers[1:], element.test_mse[1:])
    s.below("Spearman correlation of element probe MSE with depth", float(rho), s.tol["probe_spearman"])


def check_embeddings(s):
    post, pre = s.checkpoint(), s.pre_checkpoint()
    final = embedding_report(post.encoder, step=post.step)
    early = embedding_report(pre.encoder, step=pre.step, reference=final.components)
    s.below("token norm asymmetry", final.norm_asymmetry, s.tol["norm_asymmetry"])
    s.above("sign separability in top-2 PCs", final.sign_separability, s.tol["separability"])
    s.above("pre-drop separability on final PCs", early.sign_separability, s.tol["pre_alignment"])
    s.above("column clustering gain over pre-drop", final.column_clustering - early.column_clustering,
            s.tol["clustering_margin"])


def check_component_retrain(s):
    runs = s.config.get("retrain_runs") or {}
    reports = {}
    for component in ("token_embeddings", "mlp", "positional_embeddings", "attention"):
        if component not in runs or not os.path.isfile(os.path.join(runs[component], METRICS_FILE)):
            raise PrerequisiteError(f"a retraining run for {component} (key 'retrain_runs')", "retrain-component")
        reports[component] = detect_transition(s.series(runs[component]))
    for component in ("token_embeddings", "mlp"):
        s.claim(f"{component} alone: no drop", reports[component].drop_step, "none", not reports[component].detected)
    pos, att = reports["positional_embeddings"], reports["attention"]
    s.claim("positional embeddings drop later than attention", pos.drop_step, f"> {att.drop_step}",
            pos.detected and att.detected and pos.drop_step > att.drop_step)


def check_rank_sweep(s):
    runs = {int(r): d for r, d in (s.config.get("rank_runs") or {}).items()}
    if len(runs) < 2:
        raise PrerequisiteError("training runs for at least two ranks (key 'rank_runs')", "train")
    losses = {}
    for r, run_dir in sorted(runs.items()):
        if not os.path.isfile(os.path.join(run_dir, METRICS_FILE)):
            raise PrerequisiteError(f"the rank-{r} training run {run_dir}", "train")
        losses[r] = final_loss(s.series(run_dir))
    ordered = [losses[r] for r in sorted(losses)]
    s.claim("final loss increases with rank", losses, "strictly increasing",
            all(a < b for a, b in zip(ordered, ordered[1:])))


def check_distribution_shift(s):
    ckpt = s.checkpoint()
    base = apply_intervention(ckpt.encoder, evaluation_batch(ckpt, s.config, dist="uniform"),
                              InterventionSpec()).losses.L
    for dist in ("normal-0.25", "laplace-0.25"):
        L = apply_intervention(ckpt.encoder, evaluation_batch(ckpt, s.config, dist=dist), InterventionSpec()).losses.L
        s.below(f"L on {dist} / in-distribution L", L / base, s.tol["ood_factor"])


SUITES = {
    "loss-drop": check_loss_drop,
    "vs-nucnorm": check_vs_nucnorm,
    "copying": check_copying,
    "pre-drop-attention": check_pre_drop_attention,
    "post-drop-attention": check_post_drop_attention,
    "nucnorm-baseline": check_nucnorm_baseline,
    "negation-patch": check_negation,
    "head-groups": check_head_groups,
    "probes": check_probes,
    "embeddings": check_embeddings,
    "component-retrain": check_component_retrain,
    "rank-sweep": check_rank_sweep,
    "distribution-shift": check_distribution_shift,
}


def reproduce(runner, name):  # machine-readable pass/fail report for one suite
    name = SUITE_ALIASES.get(name, name)
    if name not in SUITES:
        raise ConfigError(f"unknown suite '{name}', expected one of {sorted(SUITES)} or {sorted(SUITE_ALIASES)}")
    suite = Suite(runner, name)
    SUITES[name](suite)
    report = suite.report()
    logger.info("suite %s: %d/%d claims passed", name, sum(c["passed"] for c in suite.claims), len(suite.claims))
    return report
