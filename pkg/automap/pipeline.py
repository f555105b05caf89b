"""Scripted experiment pipelines.

A pipeline script is a chain of step calls with named arguments, e.g.::

    corpus(kind="synth", count=64, n=16, seed=1)
    .corpus(kind="synth", count=16, n=16, seed=2, role="test")
    .train(encoding="radon", seed=3, epochs=20, learning_rate=0.0002)
    .evaluate(snr_db=40)
    .save(name="radon")

Statements may also be separated by newlines or semicolons; ``#`` starts a comment.
"""

import inspect
import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from lark import Lark, Transformer, v_args
from lark.exceptions import LarkError, VisitError

from automap.analysis import ActivationStats, analyze_network
from automap.baselines import BaselineResult
from automap.config import TrainConfig
from automap.datasets import Corpus, build_dataset, load_corpus, noise_corpus, synth_corpus
from automap.encoders import encoding_from_dict, make_encoding
from automap.errors import AutomapError, UsageError
from automap.evaluation import (
    NOISE_FOR_KIND,
    ExperimentReport,
    Metrics,
    baseline_corpus,
    evaluate_checkpoint,
    parse_snr,
)
from automap.network import NetParams, save_checkpoint
from automap.rng import derive_rng
from automap.training import checkpoint_metadata, train, write_history_csv

logger = logging.getLogger(__name__)

PIPELINE_GRAMMAR = r"""
start: statement+

statement: call_chain ";"?

call_chain: call (DOT call)*
call: IDENTIFIER "(" args? ")"
args: arg (COMMA arg)*
arg: IDENTIFIER "=" value

value: NUMBER
     | STRING
     | BOOL
     | NONE

DOT: "."
COMMA: ","
NUMBER: /-?\d+(\.\d+)?([eE][-+]?\d+)?/
STRING: /"([^"\\]|\\.)*"|'([^'\\]|\\.)*'/
BOOL.2: "true" | "false"
NONE.2: "none"
IDENTIFIER: /[a-zA-Z_][a-zA-Z0-9_]*/
COMMENT: /#[^\n]*/

%import common.WS
%ignore WS
%ignore COMMENT
"""


@dataclass
class PipelineCall:
    """One step call with its named arguments."""

    name: str
    args: dict[str, Any] = field(default_factory=dict)


@v_args(inline=True)
class PipelineTransformer(Transformer):
    """Transforms a Lark parse tree into a flat list of PipelineCall."""

    def start(self, *statements):
        return [call for statement in statements for call in statement]

    def statement(self, call_chain):
        return call_chain

    def call_chain(self, *calls):
        # drop DOT tokens
        return [call for call in calls if isinstance(call, PipelineCall)]

    def call(self, name, args=None):
        named: dict[str, Any] = {}
        for key, value in args or []:
            if key in named:
                raise UsageError(f"Duplicate argument {key!r} in {name}()")
            named[key] = value
        return PipelineCall(name=str(name), args=named)

    def args(self, *arg_list):
        return [arg for arg in arg_list if isinstance(arg, tuple)]

    def arg(self, name, value):
        return (str(name), value)

    def value(self, token):
        text = str(token)
        if token.type == "NUMBER":
            try:
                return int(text)
            except ValueError:
                return float(text)
        if token.type == "STRING":
            return text[1:-1]
        if token.type == "BOOL":
            return text == "true"
        return None


_PARSER = Lark(PIPELINE_GRAMMAR, start="start", parser="lalr")


def parse_pipeline(code: str) -> list[PipelineCall]:
    """
    Parse a pipeline script.

    Raises:
        UsageError: On a syntax error, with the parser's message
    """
    try:
        tree = _PARSER.parse(code)
        return PipelineTransformer().transform(tree)
    except VisitError as err:
        if isinstance(err.orig_exc, AutomapError):
            raise err.orig_exc from err
        raise UsageError(f"Invalid pipeline script: {err.orig_exc}") from err
    except LarkError as err:
        raise UsageError(f"Invalid pipeline script: {err}") from err


def step(func: Callable) -> Callable:
    """Mark a PipelineRunner method as a callable pipeline step."""
    func._is_step = True  # type: ignore[attr-defined]
    return func


@dataclass
class PipelineState:
    """Values shared along a pipeline run."""

    corpus: Corpus | None = None
    test_corpus: Corpus | None = None
    params: NetParams | None = None
    metadata: dict[str, Any] = field(default_factory=dict)
    history: list[float] = field(default_factory=list)
    reports: list[ExperimentReport] = field(default_factory=list)
    stats: list[ActivationStats] = field(default_factory=list)
    baselines: list[list[tuple[BaselineResult, Metrics]]] = field(default_factory=list)
    artifacts: list[Path] = field(default_factory=list)


class PipelineRunner:
    """Executes pipeline scripts step by step against one output directory."""

    def __init__(
        self,
        out_dir: str | Path,
        base_config: TrainConfig | None = None,
        workers: int = 1,
        progress: bool = False,
    ):
        self.out_dir = Path(out_dir)
        self.base_config = base_config or TrainConfig()
        self.workers = workers
        self.progress = progress
        self.state = PipelineState()
        self._steps = self._collect_steps()

    def _collect_steps(self) -> dict[str, Callable]:
        steps = {}
        for name in dir(type(self)):
            if getattr(getattr(type(self), name), "_is_step", False):
                steps[name] = getattr(self, name)
        return steps

    @property
    def step_names(self) -> list[str]:
        return sorted(self._steps)

    def run(self, code: str) -> PipelineState:
        """Parse and execute a script; returns the final state."""
        for call in parse_pipeline(code):
            self.execute(call)
        return self.state

    def execute(self, call: PipelineCall) -> None:
        handler = self._steps.get(call.name)
        if handler is None:
            raise UsageError(
                f"Unknown pipeline step: {call.name}. Known steps: {', '.join(self.step_names)}"
            )
        accepted = inspect.signature(handler).parameters
        unknown = sorted(set(call.args) - set(accepted))
        if unknown:
            raise UsageError(f"Step {call.name}() got unknown arguments: {', '.join(unknown)}")
        logger.info("pipeline step %s(%s)", call.name, call.args)
        handler(**call.args)

    def _require_params(self, name: str) -> NetParams:
        if self.state.params is None:
            raise UsageError(f"Step {name}() needs a trained network; run train() first")
        return self.state.params

    def _require_test(self, name: str) -> Corpus:
        corpus = self.state.test_corpus if self.state.test_corpus is not None else self.state.corpus
        if corpus is None:
            raise UsageError(f"Step {name}() needs a corpus; run corpus() first")
        return corpus

    @step
    def corpus(
        self,
        kind: str = "synth",
        count: int = 64,
        n: int = 16,
        seed: int = 0,
        path: str | None = None,
        role: str = "train",
    ) -> None:
        """Create the training (role="train") or held-out (role="test") corpus."""
        if kind == "synth":
            corpus = synth_corpus(count, n, seed)
        elif kind == "noise":
            corpus = noise_corpus(count, n, seed)
        elif kind == "pgm":
            if path is None:
                raise UsageError('corpus(kind="pgm") needs path=')
            corpus = load_corpus(path, n)
        else:
            raise UsageError(f"Unknown corpus kind: {kind}; expected synth, noise or pgm")
        if role == "train":
            self.state.corpus = corpus
        elif role == "test":
            self.state.test_corpus = corpus
        else:
            raise UsageError(f"Unknown corpus role: {role}; expected train or test")

    @step
    def train(
        self,
        encoding: str = "cartesian",
        target: str = "magnitude",
        phase_seed: int | None = None,
        seed: int | None = None,
        epochs: int | None = None,
        batch_size: int | None = None,
        learning_rate: float | None = None,
        lambda_l1: float | None = None,
        mult_noise: float | None = None,
        checkpoint_every: int | None = None,
    ) -> None:
        """Build the encoding and dataset from the training corpus, then train."""
        if self.state.corpus is None:
            raise UsageError("Step train() needs a training corpus; run corpus() first")
        cfg = self.base_config.override(
            seed=seed,
            epochs=epochs,
            batch_size=batch_size,
            learning_rate=learning_rate,
            lambda_l1=lambda_l1,
            mult_noise=mult_noise,
            checkpoint_every=checkpoint_every,
        )
        op = make_encoding(encoding, self.state.corpus.n, seed=cfg.seed)
        shift_rng = derive_rng(cfg.seed, "misalignment") if op.kind == "misaligned" else None
        dataset = build_dataset(self.state.corpus, op, target, phase_seed, shift_rng)
        params, history = train(
            dataset,
            cfg,
            checkpoint_dir=self.out_dir / "checkpoints",
            workers=self.workers,
            progress=self.progress,
        )
        self.state.params = params
        self.state.history = history
        self.state.metadata = checkpoint_metadata(dataset, cfg, cfg.epochs)

    @step
    def evaluate(
        self,
        snr_db: float | str | None = "auto",
        baseline: str = "auto",
        seed: int = 0,
        experiment: str | None = None,
        sweeps: int = 10,
    ) -> None:
        """Evaluate the trained network on the held-out corpus."""
        params = self._require_params("evaluate")
        kind = self.state.metadata["encoding"]["kind"]
        snr = NOISE_FOR_KIND[kind] if snr_db == "auto" else parse_snr(snr_db)
        report = evaluate_checkpoint(
            params,
            self.state.metadata,
            self._require_test("evaluate"),
            snr,
            self.out_dir,
            seed=seed,
            experiment=experiment,
            baseline=baseline,
            sweeps=sweeps,
            progress=self.progress,
        )
        self.state.reports.append(report)

    @step
    def analyze(self, tau: float = 0.01, seed: int = 0, kernels: bool = True) -> None:
        """Activation statistics, weight export and kernel gallery of the trained network."""
        stats = analyze_network(
            self._require_params("analyze"),
            self.state.metadata,
            self._require_test("analyze"),
            self.out_dir / "analysis",
            tau=tau,
            seed=seed,
            kernels=kernels,
        )
        self.state.stats.append(stats)

    @step
    def baseline(
        self,
        method: str = "auto",
        encoding: str | None = None,
        snr_db: float | str | None = "clean",
        seed: int = 0,
        sweeps: int = 10,
    ) -> None:
        """Conventional reconstruction of the held-out corpus."""
        corpus = self._require_test("baseline")
        if encoding is not None:
            op = make_encoding(encoding, corpus.n, seed=self.base_config.seed)
        elif self.state.metadata:
            op = encoding_from_dict(self.state.metadata["encoding"])
        else:
            raise UsageError("Step baseline() needs encoding= when no network is trained")
        results = baseline_corpus(
            method, op, corpus, self.out_dir / "baseline", snr_db, seed=seed, sweeps=sweeps
        )
        self.state.baselines.append(results)

    @step
    def save(self, name: str = "automap") -> None:
        """Write the trained network checkpoint and its loss history."""
        params = self._require_params("save")
        self.state.artifacts.append(
            save_checkpoint(self.out_dir / f"{name}.amap", params, self.state.metadata)
        )
        self.state.artifacts.append(
            write_history_csv(self.state.history, self.out_dir / f"{name}_history.csv")
        )
