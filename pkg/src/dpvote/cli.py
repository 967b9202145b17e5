"""Operator command line.

Subcommands: `accountant` (inspect the composition plan), `generate` (answer
one question), `eval-qa` (sweep a question set to a results CSV), and
`eval-mia` (membership-inference ROC/AUC). All commands read a TOML config
file with flag overrides; flags win. Exit codes: 0 success, 2 usage,
3 infeasible budget, 4 data error, 5 backend error.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import click

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .accountant import max_compositions
from .engine import Algorithm, RunConfig, run_algorithm, write_trace
from .errors import (
    BackendError,
    DataError,
    InfeasibleBudgetError,
    InsufficientCorpusError,
    InvalidArgumentError,
)
from .evaluation import (
    ExperimentConfig,
    Membership,
    attack_system,
    load_mia_jsonl,
    load_questions_jsonl,
    run_experiment,
    system_from_config,
)
from .generation import RemoteGenerator, ScriptedGenerator, train_ngram
from .mechanisms import PrivacyBudget
from .retrieval import Corpus, index_corpus
from .seeding import derive_rng

EXIT_INFEASIBLE = 3
EXIT_DATA = 4
EXIT_BACKEND = 5


@dataclass
class CliConfig:
    algorithm: str = "non-rag"
    corpus_path: str | None = None
    questions_path: str | None = None
    m: int = 1
    k: int = 1
    tau: float | None = None
    epsilon_token: float | None = None
    delta_token: float = 1e-5
    epsilon_total: float | None = None
    delta_total: float = 1e-4
    t_max_cap: int = 64
    seed: int = 0
    jobs: int = 1
    output_dir: str = "out"
    repetitions: int = 3
    generator: dict = field(default_factory=lambda: {"kind": "ngram"})


_CONFIG_FIELDS = {
    "algorithm", "corpus_path", "questions_path", "m", "k", "tau",
    "epsilon_token", "delta_token", "epsilon_total", "delta_total",
    "t_max_cap", "seed", "jobs", "output_dir", "repetitions",
}


def load_cli_config(config_path: str | None, **overrides) -> CliConfig:
    """Read the TOML config, then apply non-None flag overrides on top."""
    cfg = CliConfig()
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise DataError(f"config file not found: {path}")
        with open(path, "rb") as fh:
            try:
                raw = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise DataError(f"{path}: invalid TOML: {exc}") from exc
        for key, value in raw.items():
            if key == "generator":
                cfg.generator = dict(value)
            elif key in _CONFIG_FIELDS:
                setattr(cfg, key, value)
            else:
                raise DataError(f"{path}: unknown config key {key!r}")
    for key, value in overrides.items():
        if value is None:
            continue
        if key in _CONFIG_FIELDS:
            setattr(cfg, key, value)
        else:
            cfg.generator[key] = value
    _check_paths(cfg)
    return cfg


def _check_paths(cfg: CliConfig) -> None:
    referenced = [cfg.corpus_path, cfg.questions_path,
                  cfg.generator.get("table_path"), cfg.generator.get("train_path")]
    for ref in referenced:
        if ref is not None and not Path(ref).exists():
            raise DataError(f"referenced path does not exist: {ref}")


def build_generator(cfg: CliConfig):
    kind = cfg.generator.get("kind", "ngram")
    if kind == "scripted":
        table_path = cfg.generator.get("table_path")
        if table_path is None:
            raise DataError("scripted generator needs generator.table_path")
        return ScriptedGenerator.from_json(table_path)
    if kind == "ngram":
        train_path = cfg.generator.get("train_path")
        if train_path is None:
            raise DataError("ngram generator needs generator.train_path")
        with open(train_path, encoding="utf-8") as fh:
            texts = [line.strip() for line in fh if line.strip()]
        if not texts:
            raise DataError(f"{train_path}: training corpus is empty")
        return train_ngram(
            texts,
            order=int(cfg.generator.get("order", 3)),
            alpha=float(cfg.generator.get("alpha", 0.1)),
            context_weight=float(cfg.generator.get("context_weight", 8.0)),
        )
    if kind == "remote":
        endpoint = cfg.generator.get("endpoint")
        if endpoint is None:
            raise DataError("remote generator needs generator.endpoint")
        return RemoteGenerator(
            endpoint=endpoint,
            model=str(cfg.generator.get("model", "default")),
            response_path=str(cfg.generator.get("response_path", "choices.0.text")),
            auth_env=cfg.generator.get("auth_env"),
            timeout=float(cfg.generator.get("timeout", 30.0)),
            retries=int(cfg.generator.get("retries", 2)),
            window=cfg.generator.get("window"),
        )
    raise DataError(f"unknown generator kind {kind!r}")


def build_run_config(cfg: CliConfig, algorithm: Algorithm, seed: int) -> RunConfig:
    private = algorithm in (Algorithm.DP_VOTE_RAG, Algorithm.DP_SPARSE_VOTE_RAG)
    if private and (cfg.epsilon_token is None or cfg.epsilon_total is None):
        raise DataError(f"{algorithm.value} needs epsilon_token and epsilon_total")
    return RunConfig(
        algorithm=algorithm,
        m=cfg.m,
        k=cfg.k,
        per_token=PrivacyBudget(cfg.epsilon_token, cfg.delta_token) if private else None,
        total=PrivacyBudget(cfg.epsilon_total, cfg.delta_total) if private else None,
        tau=cfg.tau,
        t_max_cap=cfg.t_max_cap,
        seed=seed,
        jobs=cfg.jobs,
    )


def _parse_algorithm(name: str) -> Algorithm:
    try:
        return Algorithm(name)
    except ValueError as exc:
        choices = ", ".join(a.value for a in Algorithm)
        raise DataError(f"unknown algorithm {name!r} (choices: {choices})") from exc


def _guarded(body):
    """Run a command body, mapping domain errors onto exit codes."""
    try:
        body()
    except InfeasibleBudgetError as exc:
        click.echo(f"error: infeasible budget: {exc}", err=True)
        sys.exit(EXIT_INFEASIBLE)
    except BackendError as exc:
        click.echo(f"error: backend failure: {exc}", err=True)
        sys.exit(EXIT_BACKEND)
    except (DataError, InsufficientCorpusError, InvalidArgumentError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_DATA)


@click.group()
def main() -> None:
    """Differentially private retrieval-augmented generation."""


@main.command("accountant")
@click.option("--epsilon-token", type=float, required=True)
@click.option("--delta-token", type=float, default=1e-5, show_default=True)
@click.option("--epsilon-total", type=float, required=True)
@click.option("--delta-total", type=float, default=1e-4, show_default=True)
def cmd_accountant(epsilon_token, delta_token, epsilon_total, delta_total) -> None:
    """Print the composition plan as one CSV row."""

    def body() -> None:
        plan = max_compositions(
            PrivacyBudget(epsilon_token, delta_token),
            PrivacyBudget(epsilon_total, delta_total),
        )
        click.echo(
            f"{epsilon_token:.6g},{delta_token:.6g},{epsilon_total:.6g},"
            f"{delta_total:.6g},{plan.rule_used.value},{plan.max_steps}"
        )

    _guarded(body)


_SHARED_OPTIONS = [
    click.option("--config", "config_path", type=str, default=None,
                 help="TOML config file; flags override its values."),
    click.option("--algorithm", type=str, default=None),
    click.option("--corpus", "corpus_path", type=str, default=None),
    click.option("--m", type=int, default=None),
    click.option("--k", type=int, default=None),
    click.option("--tau", type=float, default=None),
    click.option("--epsilon-token", type=float, default=None),
    click.option("--delta-token", type=float, default=None),
    click.option("--epsilon-total", type=float, default=None),
    click.option("--delta-total", type=float, default=None),
    click.option("--t-max-cap", type=int, default=None),
    click.option("--seed", type=int, default=None),
    click.option("--jobs", type=int, default=None),
    click.option("--output-dir", type=str, default=None),
]


def _shared_options(command):
    for option in reversed(_SHARED_OPTIONS):
        command = option(command)
    return command


@main.command("generate")
@_shared_options
@click.option("--question", type=str, required=True)
def cmd_generate(question: str, config_path, **overrides) -> None:
    """Answer one question and write the run trace."""

    def body() -> None:
        cfg = load_cli_config(config_path, **overrides)
        algorithm = _parse_algorithm(cfg.algorithm)
        if algorithm is Algorithm.NON_RAG and cfg.corpus_path is not None:
            click.echo("warning: non-rag ignores corpus settings", err=True)
        corpus = (
            Corpus.from_jsonl(cfg.corpus_path)
            if algorithm is not Algorithm.NON_RAG and cfg.corpus_path is not None
            else None
        )
        generator = build_generator(cfg)
        run_cfg = build_run_config(cfg, algorithm, cfg.seed)
        rng = derive_rng(cfg.seed, "run")
        answer, trace = run_algorithm(question, corpus, generator, run_cfg, rng)
        write_trace(trace, run_cfg, cfg.output_dir)
        click.echo(answer)

    _guarded(body)


def _parse_list(raw: str | None, parse, fallback: list) -> list:
    if raw is None:
        return fallback
    return [parse(piece.strip()) for piece in raw.split(",") if piece.strip()]


@main.command("eval-qa")
@_shared_options
@click.option("--questions", "questions_path", type=str, default=None)
@click.option("--algorithms", type=str, default=None,
              help="Comma-separated algorithm sweep; defaults to the config algorithm.")
@click.option("--epsilon-totals", type=str, default=None, help="Comma-separated sweep.")
@click.option("--epsilon-tokens", type=str, default=None, help="Comma-separated sweep.")
@click.option("--ms", type=str, default=None, help="Comma-separated voter-count sweep.")
@click.option("--repetitions", type=int, default=None)
def cmd_eval_qa(
    config_path, questions_path, algorithms, epsilon_totals, epsilon_tokens, ms,
    repetitions, **overrides,
) -> None:
    """Sweep the question set and print the results CSV path."""

    def body() -> None:
        cfg = load_cli_config(config_path, questions_path=questions_path, **overrides)
        if cfg.questions_path is None:
            raise DataError("eval-qa needs questions_path")
        questions = load_questions_jsonl(cfg.questions_path)
        corpus = Corpus.from_jsonl(cfg.corpus_path) if cfg.corpus_path else None
        algo_list = [
            _parse_algorithm(name)
            for name in _parse_list(algorithms, str, [cfg.algorithm])
        ]
        if any(a is not Algorithm.NON_RAG for a in algo_list) and corpus is None:
            raise DataError("voting algorithms need corpus_path")
        generator = build_generator(cfg)
        exp = ExperimentConfig(
            questions=questions,
            corpus=corpus,
            generator_factory=lambda: generator,
            algorithms=algo_list,
            epsilon_totals=_parse_list(
                epsilon_totals, float, [cfg.epsilon_total or 10.0]
            ),
            epsilon_tokens=_parse_list(
                epsilon_tokens, float, [cfg.epsilon_token or 1.0]
            ),
            ms=_parse_list(ms, int, [cfg.m]),
            k=cfg.k,
            delta_token=cfg.delta_token,
            delta_total=cfg.delta_total,
            tau=cfg.tau,
            t_max_cap=cfg.t_max_cap,
            repetitions=repetitions if repetitions is not None else cfg.repetitions,
            base_seed=cfg.seed,
            output_dir=Path(cfg.output_dir),
            jobs=cfg.jobs,
        )
        csv_path = run_experiment(exp)
        click.echo(str(csv_path))

    _guarded(body)


@main.command("eval-mia")
@_shared_options
@click.option("--in", "in_path", type=str, required=True,
              help="JSONL of member documents (fields doc_id, text, membership).")
@click.option("--out", "out_path", type=str, required=True,
              help="JSONL of non-member documents.")
def cmd_eval_mia(config_path, in_path, out_path, **overrides) -> None:
    """Run the membership-inference attack and report ROC/AUC."""

    def body() -> None:
        cfg = load_cli_config(config_path, **overrides)
        algorithm = _parse_algorithm(cfg.algorithm)
        if cfg.corpus_path is None and algorithm is not Algorithm.NON_RAG:
            raise DataError("eval-mia needs corpus_path")
        for path in (in_path, out_path):
            if not Path(path).exists():
                raise DataError(f"attack set not found: {path}")
        corpus = Corpus.from_jsonl(cfg.corpus_path) if cfg.corpus_path else None
        generator = build_generator(cfg)
        run_cfg = build_run_config(cfg, algorithm, cfg.seed)
        index = index_corpus(corpus) if corpus is not None else None
        system = system_from_config(
            corpus, lambda: generator, run_cfg, base_seed=cfg.seed, index=index
        )
        in_examples = load_mia_jsonl(in_path, Membership.IN)
        out_examples = load_mia_jsonl(out_path, Membership.OUT)
        curve = attack_system(in_examples, out_examples, system)
        out_dir = Path(cfg.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        roc_path = out_dir / "roc.csv"
        with open(roc_path, "w", encoding="utf-8", newline="") as fh:
            fh.write("fpr,tpr\n")
            for fpr, tpr in curve.points:
                fh.write(f"{fpr:.6g},{tpr:.6g}\n")
        click.echo(f"auc={curve.auc:.6g}")
        click.echo(str(roc_path))

    _guarded(body)


if __name__ == "__main__":
    main()
