"""Stage-by-stage orchestration with persisted, hashed artifacts.

A run directory holds everything one scenario produces. Each stage reads its
inputs from the directory and writes its outputs back, so any stage can be
re-run on its own. ``manifest.json`` maps every file to its sha256; files
under ``logs/`` (which carry wall-clock timings) are listed separately so
that ``artifacts`` alone is a pure function of inputs and seeds.
"""
from __future__ import annotations

import hashlib
import json
import logging
import shutil
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .dispatch import OUTPUTS, percent_change, results_frame, simulate, simulate_many
from .doe import build_design, run_count, write_design
from .explain import beeswarm_data, grid_response, make_background, shapley, shapley_sampled, waterfall_data
from .hpo import tune
from .moga import GaConfig, optimize
from .plots import trace_svg, waterfall_svg
from .scenario import ScenarioConfig, load_scenario
from .surrogate import (
    FAMILY_ORDER,
    UndefinedScoreError,
    cross_validate,
    load_model,
    make_model,
    r2_score,
    save_model,
    select_best,
    train_test_split,
)

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
SCENARIO_COPY = "scenario.scn"
CLAMPED_OUTPUTS = ("ceep", "electricity_import")
REFINE_DIR = "refine"
GAP_FLOOR = 1.0
DEFAULT_GAP_THRESHOLD = 20.0
EXACT_ROW_BUDGET = 20_000_000  # coalition rows above which beeswarm switches to sampling


@dataclass(frozen=True)
class Seeds:
    design: int = 0
    profiles: int | None = None  # None: the scenario's own profile seed
    hpo: int = 0
    ga: int = 0
    shap: int = 0


@dataclass(frozen=True)
class Settings:
    trials: int = 50
    generations: int = 200
    population: int = 20
    mode: str = "pareto"
    cv: int = 5
    test_size: float = 0.3
    background: int = 100
    beeswarm_rows: int = 100
    shap_permutations: int = 32
    grid_n: int = 25
    refine_rounds: int = 10
    infill_points: int = 20
    jobs: int = 1
    families: tuple[str, ...] = FAMILY_ORDER


class StageError(RuntimeError):
    def __init__(self, stage: str, run_dir: Path, cause: Exception):
        trail = sorted(p.relative_to(run_dir).as_posix() for p in run_dir.rglob("*") if p.is_file())
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}\n"
                         f"artifacts so far in {run_dir}: {', '.join(trail) or '(none)'}")
        self.stage = stage
        self.trail = trail


def _jsonable(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialise {type(o)}")


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def write_csv(path: Path, df: pd.DataFrame) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format="%.12g", lineterminator="\n")


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


# ---------------------------------------------------------------- manifest

@dataclass
class RunManifest:
    scenario: str
    seeds: dict
    settings: dict
    version: str = __version__
    artifacts: dict = field(default_factory=dict)
    logs: dict = field(default_factory=dict)
    wall_times: dict = field(default_factory=dict)

    def save(self, run_dir: Path) -> None:
        write_json(Path(run_dir) / MANIFEST, asdict(self))

    @classmethod
    def load(cls, run_dir) -> "RunManifest":
        d = json.loads((Path(run_dir) / MANIFEST).read_text())
        return cls(**d)

    def rehash(self, run_dir: Path) -> None:
        run_dir = Path(run_dir)
        self.artifacts, self.logs = {}, {}
        for p in sorted(run_dir.rglob("*")):
            if not p.is_file() or p == run_dir / MANIFEST:
                continue
            rel = p.relative_to(run_dir).as_posix()
            (self.logs if rel.startswith("logs/") else self.artifacts)[rel] = sha256(p)


def verify(run_dir) -> list[str]:
    """Problems found when re-hashing a run directory (empty list: intact)."""
    run_dir = Path(run_dir)
    man = RunManifest.load(run_dir)
    problems = []
    listed = {**man.artifacts, **man.logs}
    for rel, digest in sorted(listed.items()):
        p = run_dir / rel
        if not p.is_file():
            problems.append(f"missing: {rel}")
        elif sha256(p) != digest:
            problems.append(f"hash mismatch: {rel}")
    for p in sorted(run_dir.rglob("*")):
        rel = p.relative_to(run_dir).as_posix()
        if p.is_file() and rel != MANIFEST and rel not in listed:
            problems.append(f"unlisted: {rel}")
    return problems


# ---------------------------------------------------------------- run context

@dataclass
class Run:
    """A scenario bound to its output directory, seeds and settings."""

    cfg: ScenarioConfig
    run_dir: Path
    seeds: Seeds
    settings: Settings
    manifest: RunManifest

    @classmethod
    def open(cls, run_dir, scenario=None, seeds: Seeds | None = None, settings: Settings | None = None,
             ledger=None) -> "Run":
        """Create or reopen a run directory.

        Seeds and settings given explicitly win over those stored in an
        existing manifest; otherwise the stored ones are reused.
        """
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        stored = RunManifest.load(run_dir) if (run_dir / MANIFEST).exists() else None
        copy = run_dir / SCENARIO_COPY
        if scenario is not None:
            cfg = load_scenario(scenario)
            src = Path(cfg.source_path)
            if not copy.exists() or copy.read_bytes() != src.read_bytes():
                shutil.copyfile(src, copy)
        elif not copy.exists():
            raise FileNotFoundError(f"{run_dir} has no {SCENARIO_COPY}; pass a scenario")
        cfg = load_scenario(copy)
        if seeds is None:
            seeds = Seeds(**stored.seeds) if stored else Seeds()
        if settings is None:
            settings = settings_from_dict(stored.settings) if stored else Settings()
        if ledger is not None:
            shutil.copyfile(ledger, run_dir / "decisions.md")
        manifest = RunManifest(cfg.name, asdict(seeds), asdict(settings))
        if stored:
            manifest.wall_times = dict(stored.wall_times)
        run = cls(cfg, run_dir, seeds, settings, manifest)
        run.commit()
        return run

    def path(self, rel: str) -> Path:
        return self.run_dir / rel

    @property
    def profile_seed(self) -> int:
        return self.cfg.profile_seed if self.seeds.profiles is None else self.seeds.profiles

    def commit(self) -> None:
        self.manifest.rehash(self.run_dir)
        self.manifest.save(self.run_dir)

    def stage(self, name: str, fn, *args, **kw):
        log.info("[%s] %s", self.cfg.name, name)
        t0 = time.perf_counter()
        try:
            out = fn(self, *args, **kw)
        except Exception as exc:
            raise StageError(name, self.run_dir, exc) from exc
        self.manifest.wall_times[name] = round(time.perf_counter() - t0, 3)
        self.commit()
        return out


def settings_from_dict(d: dict) -> Settings:
    d = dict(d)
    d["families"] = tuple(d.get("families", FAMILY_ORDER))
    return Settings(**d)


# ---------------------------------------------------------------- stages

def design_stage(run: Run) -> pd.DataFrame:
    spec = run.cfg.design_spec()
    design = build_design(spec, seed=run.seeds.design, randomize=True)
    write_design(design, run.path("design.csv"), run.path("design.json"))
    return design.to_frame()


def _design_rows(run: Run) -> np.ndarray:
    df = pd.read_csv(run.path("design.csv"))
    return df[run.cfg.factor_names].to_numpy(dtype=float)


def simulate_stage(run: Run) -> pd.DataFrame:
    rows = _design_rows(run)
    profiles = run.cfg.profiles(run.profile_seed)
    results = simulate_many(run.cfg, rows, profiles, n_jobs=run.settings.jobs)
    df = results_frame(run.cfg, rows, results)
    write_csv(run.path("simulations.csv"), df)
    write_json(run.path("profiles.json"), {"seed": run.profile_seed, "sha256": profiles.digest(),
                                           "annual_demand_twh": profiles.annual_demand_twh})
    return df


def load_dataset(run: Run) -> tuple[np.ndarray, pd.DataFrame]:
    df = pd.read_csv(run.path("simulations.csv"))
    return df[run.cfg.factor_names].to_numpy(dtype=float), df


def split(run: Run, n: int):
    return train_test_split(n, run.settings.test_size, seed=run.seeds.hpo)


def tune_stage(run: Run, outputs=OUTPUTS, families=None) -> dict:
    X, df = load_dataset(run)
    train, _ = split(run, len(X))
    families = families or run.settings.families
    best = {}
    for out in outputs:
        y = df[out].to_numpy(dtype=float)
        for fam in families:
            res = tune(fam, X[train], y[train], n_trials=run.settings.trials, seed=run.seeds.hpo,
                       cv=run.settings.cv)
            tag = f"{out}.{fam}"
            write_json(run.path(f"tuning/{tag}.json"), {
                "output": out, "family": fam, "best_params": res.best_params,
                "best_cv_r2": res.best_score, "n_trials": run.settings.trials, "seed": run.seeds.hpo,
            })
            hist = res.history.to_frame()
            write_csv(run.path(f"logs/tuning/{tag}.csv"), hist)
            log.info("  %-20s %-3s cv r2 %.4f", out, fam, res.best_score)
            best[tag] = res
    return best


def tuned_params(run: Run, output: str, family: str) -> dict:
    p = run.path(f"tuning/{output}.{family}.json")
    return json.loads(p.read_text())["best_params"] if p.exists() else {}


def fit_stage(run: Run) -> pd.DataFrame:
    """Score every family, pick one per output by CV R^2, refit it on all rows."""
    X, df = load_dataset(run)
    train, test = split(run, len(X))
    rows = []
    for out in OUTPUTS:
        y = df[out].to_numpy(dtype=float)
        reports, holdout = {}, {}
        for fam in run.settings.families:
            params = tuned_params(run, out, fam)
            model = make_model(fam, params, random_state=run.seeds.hpo)
            reports[fam] = cross_validate(model, X[train], y[train], k=run.settings.cv, seed=run.seeds.hpo,
                                          tag=fam)
            fitted = make_model(fam, params, random_state=run.seeds.hpo).fit(X[train], y[train])
            try:
                holdout[fam] = r2_score(y[test], fitted.predict(X[test]))
            except UndefinedScoreError:
                holdout[fam] = None
        chosen = select_best(reports)
        params = tuned_params(run, out, chosen)
        final = make_model(chosen, params, random_state=run.seeds.hpo).fit(X, y)
        run.path("models").mkdir(exist_ok=True)
        save_model(final, run.path(f"models/{out}.json"), output=out, family=chosen, params=params)
        for fam in run.settings.families:
            r = reports[fam]
            rows.append({"output": out, "family": fam, "cv_r2_mean": r.mean, "cv_r2_std": r.std,
                         "cv_undefined_folds": r.undefined_folds, "holdout_r2": holdout[fam],
                         "selected": fam == chosen})
        log.info("  %-20s -> %s (holdout r2 %s)", out, chosen, holdout[chosen])
    report = pd.DataFrame(rows)
    write_csv(run.path("fit_report.csv"), report)
    return report


def load_models(run: Run) -> list:
    return [load_model(run.path(f"models/{out}.json")) for out in OUTPUTS]


def _run_ga(run: Run, models):
    _, df = load_dataset(run)
    s = run.settings
    mode = "weighted_sum" if s.mode in ("weighted", "weighted_sum") else "pareto"
    cfg = GaConfig(population_size=s.population, generations=s.generations, mode=mode, seed=run.seeds.ga)
    Y = df[list(OUTPUTS)].to_numpy(dtype=float)
    res = optimize(models, run.cfg.lower, run.cfg.upper, cfg, objective_names=list(OUTPUTS),
                   norm_range=(Y.min(axis=0), Y.max(axis=0)))
    return res, mode


def _write_optimum(run: Run, res, mode: str, folder: str) -> None:
    write_csv(run.path(f"{folder}/front.csv"), res.front.to_frame(run.cfg.factor_names, OUTPUTS))
    comp = res.front.compromise
    write_json(run.path(f"{folder}/compromise.json"), {
        "capacities": dict(zip(run.cfg.factor_names, comp.genes)),
        "predicted": dict(zip(OUTPUTS, comp.objectives)),
        "mode": mode,
    })


def optimize_stage(run: Run):
    res, mode = _run_ga(run, load_models(run))
    _write_optimum(run, res, mode, "optimize")
    write_csv(run.path("optimize/trace.csv"), res.trace)
    cols = [f"best_{o}" for o in OUTPUTS]
    run.path("optimize/trace.svg").write_text(trace_svg(res.trace, cols, f"{run.cfg.name}: generation best"))
    return res


def load_compromise(run: Run, folder: str = "optimize") -> np.ndarray:
    d = json.loads(run.path(f"{folder}/compromise.json").read_text())
    return np.array([d["capacities"][n] for n in run.cfg.factor_names], dtype=float)


def _refined(run: Run) -> bool:
    return run.path(f"{REFINE_DIR}/models").is_dir()


def final_models(run: Run) -> list:
    """Refit models if the refinement loop ran, else the fit-stage models."""
    if _refined(run):
        return [load_model(run.path(f"{REFINE_DIR}/models/{out}.json")) for out in OUTPUTS]
    return load_models(run)


def final_compromise(run: Run) -> np.ndarray:
    return load_compromise(run, REFINE_DIR if _refined(run) else "optimize")


def final_validation(run: Run) -> dict:
    p = run.path(f"{REFINE_DIR}/validation.json")
    return json.loads((p if p.exists() else run.path("validation.json")).read_text())


@dataclass
class ValidationReport:
    rows: list[dict]
    res_production: float
    annual_demand_twh: float
    threshold: float = DEFAULT_GAP_THRESHOLD

    @property
    def max_gap(self) -> float:
        return max(r["gap_pct"] for r in self.rows)

    @property
    def passed(self) -> bool:
        return self.max_gap <= self.threshold

    def simulated(self) -> dict:
        return {r["output"]: r["simulated"] for r in self.rows}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    def to_dict(self) -> dict:
        return asdict(self)


def gap_pct(simulated: float, predicted: float, floor: float = GAP_FLOOR) -> float:
    return 100.0 * abs(simulated - predicted) / max(abs(simulated), floor)


def validate(models, caps, cfg: ScenarioConfig, profiles, threshold: float = DEFAULT_GAP_THRESHOLD
             ) -> ValidationReport:
    """Re-simulate ``caps`` and compare with each output model's prediction."""
    caps = np.asarray(caps, dtype=float)
    sim = simulate(cfg, caps, profiles)
    rows = []
    for out, model in zip(OUTPUTS, models):
        pred = float(np.asarray(model.predict(caps[None, :])).ravel()[0])
        if out in CLAMPED_OUTPUTS:
            pred = max(pred, 0.0)
        s = float(getattr(sim, out))
        rows.append({"output": out, "predicted": pred, "simulated": s, "abs_gap": abs(s - pred),
                     "gap_pct": gap_pct(s, pred)})
    return ValidationReport(rows, float(sim.res_production), profiles.annual_demand_twh, threshold)


def validate_stage(run: Run, threshold: float = DEFAULT_GAP_THRESHOLD) -> ValidationReport:
    profiles = run.cfg.profiles(run.profile_seed)
    rep = validate(load_models(run), load_compromise(run), run.cfg, profiles, threshold)
    write_json(run.path("validation.json"), rep.to_dict())
    write_csv(run.path("validation.csv"), rep.to_frame())
    return rep


def _history_rows(round_no: int, rep: ValidationReport, caps, names) -> list[dict]:
    rows = []
    for r in rep.rows:
        rows.append({"round": round_no, **r})
    rows[0].update({f"cap_{n}": v for n, v in zip(names, caps)})
    return rows


def spread_points(candidates, first, k: int, lower, upper) -> np.ndarray:
    """``first`` plus up to ``k - 1`` candidates picked greedily by maximin
    distance in box-normalised coordinates (ties go to the earlier row)."""
    lo, hi = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
    span = np.where(hi > lo, hi - lo, 1.0)
    C = (np.asarray(candidates, dtype=float) - lo) / span
    chosen = [np.asarray(first, dtype=float)]
    dist = np.linalg.norm(C - (chosen[0] - lo) / span, axis=1)
    while len(chosen) < k and len(C) and dist.max() > 0:
        i = int(np.argmax(dist))
        chosen.append(np.asarray(candidates, dtype=float)[i])
        dist = np.minimum(dist, np.linalg.norm(C - C[i], axis=1))
    return np.array(chosen)


def refine_stage(run: Run, threshold: float = DEFAULT_GAP_THRESHOLD) -> ValidationReport:
    """Infill loop: while a validation gap exceeds ``threshold``, simulate the
    compromise and a spread of other front members, add them to the training
    rows, refit each selected model with its tuned hyperparameters,
    re-optimise and validate again.

    Runs at most ``settings.refine_rounds`` rounds, adding at most
    ``settings.infill_points`` rows per round. Starts from the fit-stage
    models and compromise every time, so re-running it reproduces its outputs.
    """
    out_dir = run.path(REFINE_DIR)
    if out_dir.exists():
        shutil.rmtree(out_dir)
    names = run.cfg.factor_names
    X, df = load_dataset(run)
    Y = df[list(OUTPUTS)].to_numpy(dtype=float)
    profiles = run.cfg.profiles(run.profile_seed)
    metas = [json.loads(run.path(f"models/{out}.json").read_text())["meta"] for out in OUTPUTS]
    models = load_models(run)
    caps = load_compromise(run)
    front = pd.read_csv(run.path("optimize/front.csv"))[names].to_numpy(dtype=float)
    rep = validate(models, caps, run.cfg, profiles, threshold)
    history = _history_rows(0, rep, caps, names)
    first_max = rep.max_gap
    infill = []
    rounds = 0
    res = mode = None
    while not rep.passed and rounds < run.settings.refine_rounds:
        rounds += 1
        new = spread_points(front, caps, run.settings.infill_points, run.cfg.lower, run.cfg.upper)
        sims = simulate_many(run.cfg, new, profiles)
        new_y = np.array([r.outputs() for r in sims])
        infill += [{"round": rounds, **dict(zip(names, c)), **dict(zip(OUTPUTS, y))} for c, y in zip(new, new_y)]
        X = np.vstack([X, new])
        Y = np.vstack([Y, new_y])
        models = [make_model(m["family"], m["params"], random_state=run.seeds.hpo).fit(X, Y[:, j])
                  for j, m in enumerate(metas)]
        res, mode = _run_ga(run, models)
        caps = res.front.compromise.genes
        front = res.front.X
        rep = validate(models, caps, run.cfg, profiles, threshold)
        history += _history_rows(rounds, rep, caps, names)
        log.info("  refine round %d: max gap %.2f%%", rounds, rep.max_gap)
    if rounds:
        write_csv(run.path(f"{REFINE_DIR}/infill.csv"), pd.DataFrame(infill))
        run.path(f"{REFINE_DIR}/models").mkdir(parents=True)
        for out, model, m in zip(OUTPUTS, models, metas):
            save_model(model, run.path(f"{REFINE_DIR}/models/{out}.json"), **m, infill_rows=len(infill))
        _write_optimum(run, res, mode, REFINE_DIR)
        write_json(run.path(f"{REFINE_DIR}/validation.json"), rep.to_dict())
        write_csv(run.path(f"{REFINE_DIR}/validation.csv"), rep.to_frame())
    write_csv(run.path(f"{REFINE_DIR}/history.csv"), pd.DataFrame(history))
    write_json(run.path(f"{REFINE_DIR}/summary.json"), {
        "rounds": rounds, "max_rounds": run.settings.refine_rounds, "threshold": threshold,
        "first_pass_max_gap": first_max,
        "final_max_gap": rep.max_gap, "passed": rep.passed,
    })
    return rep


def explain_stage(run: Run) -> dict:
    X, _ = load_dataset(run)
    names = run.cfg.factor_names
    k = len(names)
    s = run.settings
    bg = make_background(X, s.background, seed=run.seeds.shap)
    caps = final_compromise(run)
    exact_ok = (1 << k) * len(bg) * len(X) <= EXACT_ROW_BUDGET
    if exact_ok:
        rows, method = X, "exact"
    else:
        rows = make_background(X, s.beeswarm_rows, seed=run.seeds.shap + 1)
        method = "sampled"
    summary = {"beeswarm_method": method, "beeswarm_rows": len(rows), "background_rows": len(bg),
               "outputs": {}}
    for out, model in zip(OUTPUTS, final_models(run)):
        if k <= 20:
            att = shapley(model, caps, bg, names)
        else:
            att = shapley_sampled(model, caps, bg, s.shap_permutations, seed=run.seeds.shap, feature_names=names)
        wf = waterfall_data(att)
        write_csv(run.path(f"explain/{out}.waterfall.csv"), wf)
        run.path(f"explain/{out}.waterfall.svg").write_text(waterfall_svg(wf, f"{run.cfg.name}: {out}"))
        bees = beeswarm_data(model, rows, bg, names, method=method, n_permutations=s.shap_permutations,
                             seed=run.seeds.shap)
        write_csv(run.path(f"explain/{out}.beeswarm.csv"), bees.to_frame())
        top = bees.order[:2]
        grid = grid_response(model, names.index(top[0]), names.index(top[1]), caps, run.cfg.lower,
                             run.cfg.upper, s.grid_n, names)
        write_csv(run.path(f"explain/{out}.grid.csv"), grid)
        scale = max(1.0, abs(att.prediction))
        summary["outputs"][out] = {
            "baseline": att.baseline,
            "prediction": att.prediction,
            "phi": dict(zip(names, att.phi)),
            "importance_order": bees.order,
            "mean_abs_phi": dict(bees.importance()),
            "max_efficiency_gap_rel": max(att.efficiency_gap,
                                          float(bees.efficiency_gaps().max())) / scale,
        }
    write_json(run.path("explain/summary.json"), summary)
    return summary


def summary_stage(run: Run) -> str:
    """Per-scenario markdown summary."""
    spec = run.cfg.design_spec()
    fit = pd.read_csv(run.path("fit_report.csv"))
    first = json.loads(run.path("validation.json").read_text())
    final = final_validation(run)
    folder = REFINE_DIR if _refined(run) else "optimize"
    comp = json.loads(run.path(f"{folder}/compromise.json").read_text())
    refine_p = run.path(f"{REFINE_DIR}/summary.json")
    rounds = json.loads(refine_p.read_text())["rounds"] if refine_p.exists() else 0
    lines = [f"# {run.cfg.name}", "",
             f"- design runs: {run_count(spec)} ({spec.k} factors, fraction exponent "
             f"{spec.fraction_exponent or 0}, {spec.center_points} center points, alpha {spec.alpha})",
             f"- annual demand: {run.cfg.annual_demand_twh:g} TWh",
             f"- refinement rounds: {rounds}", "",
             "## Surrogates", "", "| output | family | CV R2 | hold-out R2 | selected |", "|---|---|---|---|---|"]
    for r in fit.itertuples(index=False):
        lines.append(f"| {r.output} | {r.family} | {_f(r.cv_r2_mean)} | {_f(r.holdout_r2)} | "
                     f"{'yes' if r.selected else ''} |")
    lines += ["", "## Compromise capacities", "", "| factor | value |", "|---|---|"]
    lines += [f"| {k} | {v:.6g} |" for k, v in comp["capacities"].items()]
    sections = [("first pass", first)] + ([("after refinement", final)] if rounds else [])
    for label, val in sections:
        lines += ["", f"## Validation, {label} (re-simulated compromise)", "",
                  "| output | predicted | simulated | gap % |", "|---|---|---|---|"]
        lines += [f"| {r['output']} | {r['predicted']:.6g} | {r['simulated']:.6g} | {r['gap_pct']:.2f} |"
                  for r in val["rows"]]
    text = "\n".join(lines) + "\n"
    run.path("summary.md").write_text(text)
    return text


def _f(v) -> str:
    return "n/a" if v is None or (isinstance(v, float) and np.isnan(v)) else f"{v:.4f}"


STAGES = {
    "design": design_stage,
    "simulate": simulate_stage,
    "tune": tune_stage,
    "fit": fit_stage,
    "optimize": optimize_stage,
    "validate": validate_stage,
    "refine": refine_stage,
    "explain": explain_stage,
    "summary": summary_stage,
}


def run_pipeline(scenario, run_dir, seeds: Seeds = Seeds(), settings: Settings = Settings(),
                 gap_threshold: float = DEFAULT_GAP_THRESHOLD, ledger=None) -> tuple[Run, ValidationReport]:
    run = Run.open(run_dir, scenario, seeds, settings, ledger=ledger)
    for name in ("design", "simulate", "tune", "fit", "optimize"):
        run.stage(name, STAGES[name])
    run.stage("validate", validate_stage, gap_threshold)
    report = run.stage("refine", refine_stage, gap_threshold)
    run.stage("explain", explain_stage)
    run.stage("summary", summary_stage)
    return run, report


# ---------------------------------------------------------------- comparison

RUN_COUNT_NOTE = (
    "Run counts follow N = 2^(k-p) + 2k + n_c. With k=15, p=6 and n_c=10 that is "
    "512 + 30 + 10 = 552 runs; a published figure of 556 for the same design does not "
    "satisfy the formula, and 552 is used here."
)


def compare_runs(base_dir, alt_dir, out_dir) -> pd.DataFrame:
    """Percent changes from the ``base`` run's validated compromise to ``alt``'s."""
    base, alt = Run.open(base_dir), Run.open(alt_dir)
    if not np.isclose(base.cfg.annual_demand_twh, alt.cfg.annual_demand_twh):
        raise ValueError(f"annual demand differs: {base.cfg.annual_demand_twh} vs {alt.cfg.annual_demand_twh}")
    vb, va = final_validation(base), final_validation(alt)
    sb = {r["output"]: r["simulated"] for r in vb["rows"]}
    sa = {r["output"]: r["simulated"] for r in va["rows"]}
    sb["res_production"], sa["res_production"] = vb["res_production"], va["res_production"]
    rows = [{"quantity": q, base.cfg.name: sb[q], alt.cfg.name: sa[q], "change": percent_change(sb[q], sa[q]),
             "unit": "%" if sb[q] != 0 else "abs"} for q in (*OUTPUTS, "res_production")]
    demand = base.cfg.annual_demand_twh
    share_b, share_a = 100 * sb["res_production"] / demand, 100 * sa["res_production"] / demand
    rows.append({"quantity": "res_share_pct", base.cfg.name: share_b, alt.cfg.name: share_a,
                 "change": share_a - share_b, "unit": "pp"})
    table = pd.DataFrame(rows)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "comparison.csv", table)
    counts = {r.cfg.name: run_count(r.cfg.design_spec()) for r in (base, alt)}
    lines = [f"# {base.cfg.name} vs {alt.cfg.name}", "",
             "Values are re-simulated outputs at each run's compromise capacities.", "",
             f"| quantity | {base.cfg.name} | {alt.cfg.name} | change |", "|---|---|---|---|"]
    for r in rows:
        unit = {"%": "%", "abs": " (abs)", "pp": " pp"}[r["unit"]]
        lines.append(f"| {r['quantity']} | {r[base.cfg.name]:.6g} | {r[alt.cfg.name]:.6g} | "
                     f"{r['change']:+.2f}{unit} |")
    lines += ["", "Units: cost MUSD/yr (no currency-year normalisation), CO2 Mt/yr, energies TWh/yr.",
              "RES production is gross output before curtailment.", "",
              "## Design sizes", ""]
    lines += [f"- {name}: {n} runs" for name, n in counts.items()]
    lines += ["", RUN_COUNT_NOTE, ""]
    (out_dir / "report.md").write_text("\n".join(lines))
    return table
