"""LangGraph workflow for one cross-validation fold (or the final refit).

    normalize -> window -> {train_price, train_structural} -> fuse -> evaluate -> finalize

The two stream nodes fan out from ``window`` and join at ``fuse``, so LangGraph runs them in
the same superstep. They write disjoint keys; only ``history`` is shared, through an
additive reducer.
"""

import logging
import operator
from dataclasses import dataclass, field
from functools import wraps
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd
from langgraph.graph import END, StateGraph
from typing_extensions import Annotated, TypedDict

from core.config import PgruConfig
from core.errors import PgruError
from core.metrics import MetricsReport, compute_metrics, persistence_predictions
from core.ndcore import SeededRng, derive_seed
from core.preprocess import (NormParams, SampleSet, build_windows, fit_scaler, invert_column,
                             normalize_dataset, training_rows)
from integrations.dataio import PRICE_FEATURES, STRUCT_FEATURES, AlignedDataset
from networks.fusion import FusionNetwork
from networks.optim import (LmState, TrainingHistory, fusion_cv_supported, select_fusion,
                            train_fusion, train_stream)
from networks.rnn import StreamNetwork, predict

logger = logging.getLogger(__name__)

PRICE_STREAM = 0
STRUCT_STREAM = 1
FUSION_STREAM = 2


@dataclass(eq=False)
class PredictionTrace:
    """Fused one-step predictions next to the truth, both in USD."""

    dates: tuple
    true: np.ndarray
    pred: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "date": [d.isoformat() for d in self.dates],
            "true": self.true,
            "pred": self.pred,
            "abs_err": np.abs(self.true - self.pred),
        })


@dataclass(eq=False)
class FoldOutcome:
    fold: int
    price_net: StreamNetwork
    struct_net: StreamNetwork
    fusion: FusionNetwork
    price_norm: NormParams
    struct_norm: NormParams
    price_history: TrainingHistory
    struct_history: TrainingHistory
    fusion_trace: List[float]
    train_trace: PredictionTrace
    n_train: int
    n_valid: int
    metrics: Dict[str, Optional[float]] = field(default_factory=dict)
    history: List[Dict[str, Any]] = field(default_factory=list)


class FoldState(TypedDict, total=False):
    """State for the per-fold graph."""
    # Inputs
    fold: int
    dataset: AlignedDataset
    starts: np.ndarray
    train_idx: np.ndarray
    valid_idx: np.ndarray

    # normalize / window
    price_norm: NormParams
    struct_norm: NormParams
    train_samples: SampleSet
    valid_samples: SampleSet
    stream_samples: SampleSet
    fusion_samples: Optional[SampleSet]

    # Streams (written by parallel nodes; keys must stay disjoint)
    price_net: StreamNetwork
    price_history: TrainingHistory
    struct_net: StreamNetwork
    struct_history: TrainingHistory

    # fuse / evaluate
    fusion: FusionNetwork
    fusion_trace: List[float]
    metrics: Dict[str, Optional[float]]
    train_trace: PredictionTrace

    history: Annotated[List[Dict[str, Any]], operator.add]
    output: FoldOutcome


def _stage(step: str) -> Callable:
    """Tag PgruErrors raised inside a node with the node name."""
    def decorate(node: Callable) -> Callable:
        @wraps(node)
        def wrapper(self, state: FoldState) -> Dict[str, Any]:
            try:
                return node(self, state)
            except PgruError as e:
                raise e.with_context(step=step)
        return wrapper
    return decorate


def _metric_columns(prefix: str, report: Optional[MetricsReport]) -> Dict[str, Optional[float]]:
    if report is None:
        return {f"{prefix}mse": None, f"{prefix}mape": None}
    return {f"{prefix}mse": report.mse, f"{prefix}mape": report.mape}


class FoldWorkflow:
    """Train both streams and the fusion net on one split and score the held-out part."""

    def __init__(self, config: PgruConfig):
        self.config = config
        self.rng = SeededRng(config.seed)
        self.graph = self._build_graph()

    def _build_graph(self):
        workflow = StateGraph(FoldState)

        workflow.add_node("normalize", self._normalize_node)
        workflow.add_node("window", self._window_node)
        workflow.add_node("train_price", self._train_price_node)
        workflow.add_node("train_structural", self._train_structural_node)
        workflow.add_node("fuse", self._fuse_node)
        workflow.add_node("evaluate", self._evaluate_node)
        workflow.add_node("finalize", self._finalize_node)

        workflow.set_entry_point("normalize")
        workflow.add_edge("normalize", "window")
        workflow.add_edge("window", "train_price")
        workflow.add_edge("window", "train_structural")
        workflow.add_edge(["train_price", "train_structural"], "fuse")
        workflow.add_edge("fuse", "evaluate")
        workflow.add_edge("evaluate", "finalize")
        workflow.add_edge("finalize", END)
        return workflow.compile()

    @_stage("normalize")
    def _normalize_node(self, state: FoldState) -> Dict[str, Any]:
        dataset = state["dataset"]
        cfg = self.config
        if cfg.normalization == "leakfree":
            rows = training_rows(state["starts"][state["train_idx"]], cfg.window)
        else:
            rows = np.arange(len(dataset))
        price_norm = fit_scaler(dataset.price[rows], cfg.scaling)
        struct_norm = fit_scaler(dataset.structural[rows], cfg.scaling)
        logger.debug(f"Fold {state['fold']}: fitted {cfg.scaling} scaling on {rows.size} row(s)")
        return {
            "price_norm": price_norm,
            "struct_norm": struct_norm,
            "history": [{"step": "normalize", "mode": cfg.normalization, "rows": int(rows.size)}],
        }

    @_stage("window")
    def _window_node(self, state: FoldState) -> Dict[str, Any]:
        normalized = normalize_dataset(state["dataset"], state["price_norm"], state["struct_norm"])
        samples = build_windows(normalized, self.config.window, state["starts"])
        train, valid = samples.subset(state["train_idx"]), samples.subset(state["valid_idx"])
        stream_part, fusion_part = self._split_for_fusion(train, state["fold"])
        return {
            "train_samples": train,
            "valid_samples": valid,
            "stream_samples": stream_part,
            "fusion_samples": fusion_part,
            "history": [{"step": "window", "n_train": len(train), "n_valid": len(valid),
                         "n_fusion": len(fusion_part) if fusion_part is not None else 0}],
        }

    def _fusion_template(self, fold: int) -> FusionNetwork:
        cfg = self.config
        return FusionNetwork.init(self.rng.substream(fold, FUSION_STREAM),
                                  hidden=cfg.fusion_hidden, skip=cfg.fusion_skip)

    def _split_for_fusion(self, train: SampleSet, fold: int):
        """Latest training windows held back from the streams for fitting the fusion.

        Returns ``(train, None)`` when the holdout is disabled or too small to cross-validate
        the fusion; the fusion is then fitted on the streams' training predictions.
        """
        n_hold = int(round(self.config.fusion_holdout * len(train)))
        if n_hold == 0 or not fusion_cv_supported(self._fusion_template(fold), n_hold):
            return train, None
        order = np.argsort(train.starts, kind="stable")
        return train.subset(order[:-n_hold]), train.subset(order[-n_hold:])

    def _train(self, state: FoldState, stream: str, code: int, input_dim: int):
        cfg = self.config
        fold = state["fold"]
        net = StreamNetwork.init(cfg.cell, input_dim, cfg.hidden_dim, self.rng.substream(fold, code),
                                 head_units=cfg.head_units, head_layers=cfg.head_layers)
        valid = state["valid_samples"]
        return train_stream(net, state["stream_samples"], valid if len(valid) else None, cfg.epochs,
                            adam=cfg.adam, seed=derive_seed(cfg.seed, fold, code), stream=stream,
                            batch_size=cfg.batch_size, full_batch_limit=cfg.full_batch_limit,
                            keep_best=False)

    @_stage("train_price")
    def _train_price_node(self, state: FoldState) -> Dict[str, Any]:
        net, history = self._train(state, "price", PRICE_STREAM, len(PRICE_FEATURES))
        return {
            "price_net": net,
            "price_history": history,
            "history": [{"step": "train_price", "best_epoch": history.best_epoch}],
        }

    @_stage("train_structural")
    def _train_structural_node(self, state: FoldState) -> Dict[str, Any]:
        net, history = self._train(state, "structural", STRUCT_STREAM, len(STRUCT_FEATURES))
        return {
            "struct_net": net,
            "struct_history": history,
            "history": [{"step": "train_structural", "best_epoch": history.best_epoch}],
        }

    @_stage("fuse")
    def _fuse_node(self, state: FoldState) -> Dict[str, Any]:
        lm = LmState.from_config(self.config.lm)
        template = self._fusion_template(state["fold"])
        held_out = state.get("fusion_samples")
        samples = held_out if held_out is not None else state["train_samples"]
        preds = np.column_stack([predict(state["price_net"], samples.input1),
                                 predict(state["struct_net"], samples.input2)])
        if held_out is not None:
            choice = select_fusion(template, preds, samples.output, lm)
            fusion, trace, selected = choice.fusion, choice.trace, choice.selected
        else:
            fusion, trace = train_fusion(template, preds, samples.output, lm)
            selected = "fitted"
        return {
            "fusion": fusion,
            "fusion_trace": trace,
            "history": [{"step": "fuse", "sse": trace[-1], "iterations": len(trace) - 1,
                         "source": "holdout" if held_out is not None else "train",
                         "selected": selected}],
        }

    def _fused_usd(self, state: FoldState, samples: SampleSet):
        """(price stream, structural stream, fused) predictions in USD."""
        p1 = predict(state["price_net"], samples.input1)
        p2 = predict(state["struct_net"], samples.input2)
        fused = state["fusion"].forward(np.column_stack([p1, p2]))
        norm = state["price_norm"]
        return invert_column(norm, p1), invert_column(norm, p2), invert_column(norm, fused)

    @_stage("evaluate")
    def _evaluate_node(self, state: FoldState) -> Dict[str, Any]:
        w = self.config.window
        avg = state["dataset"].avg_price
        train, valid = state["train_samples"], state["valid_samples"]

        _, _, train_pred = self._fused_usd(state, train)
        train_trace = PredictionTrace(train.sample_dates, avg[train.starts + w], train_pred)

        fused = price = structural = persistence = None
        if len(valid):
            true = avg[valid.starts + w]
            p1, p2, pred = self._fused_usd(state, valid)
            fused = compute_metrics(true, pred)
            price = compute_metrics(true, p1)
            structural = compute_metrics(true, p2)
            persistence = compute_metrics(*persistence_predictions(avg, valid.starts, w))
            logger.info(f"Fold {state['fold']}: fused MAPE {fused.mape:.3f}% "
                        f"(persistence {persistence.mape:.3f}%)")

        metrics: Dict[str, Optional[float]] = {
            "mse": fused.mse if fused else None,
            "rmse": fused.rmse if fused else None,
            "mae": fused.mae if fused else None,
            "mape": fused.mape if fused else None,
        }
        metrics.update(_metric_columns("price_", price))
        metrics.update(_metric_columns("structural_", structural))
        metrics.update(_metric_columns("persistence_", persistence))
        return {
            "metrics": metrics,
            "train_trace": train_trace,
            "history": [{"step": "evaluate", "mse": metrics["mse"]}],
        }

    def _finalize_node(self, state: FoldState) -> Dict[str, Any]:
        outcome = FoldOutcome(
            fold=state["fold"],
            price_net=state["price_net"],
            struct_net=state["struct_net"],
            fusion=state["fusion"],
            price_norm=state["price_norm"],
            struct_norm=state["struct_norm"],
            price_history=state["price_history"],
            struct_history=state["struct_history"],
            fusion_trace=state["fusion_trace"],
            train_trace=state["train_trace"],
            n_train=len(state["train_samples"]),
            n_valid=len(state["valid_samples"]),
            metrics=state["metrics"],
            history=list(state.get("history") or []),
        )
        return {"output": outcome}

    def run(self, dataset: AlignedDataset, starts: np.ndarray, train_idx: np.ndarray,
            valid_idx: np.ndarray, fold: int) -> FoldOutcome:
        """Run the graph for one split; errors are re-raised with the fold attached."""
        initial_state: FoldState = {
            "fold": fold,
            "dataset": dataset,
            "starts": np.asarray(starts, dtype=np.int64),
            "train_idx": np.asarray(train_idx, dtype=np.int64),
            "valid_idx": np.asarray(valid_idx, dtype=np.int64),
            "history": [],
        }
        logger.info(f"Fold {fold}: training on {len(train_idx)} sample(s), validating on {len(valid_idx)}")
        try:
            result = self.graph.invoke(initial_state)
        except PgruError as e:
            logger.error(f"Fold {fold} failed: {e}")
            raise e.with_context(fold=fold)
        return result["output"]


def run_fold(dataset: AlignedDataset, config: PgruConfig, starts: np.ndarray,
             train_idx: np.ndarray, valid_idx: np.ndarray, fold: int) -> FoldOutcome:
    """Joblib work item: builds its own graph so nothing is shared across workers."""
    return FoldWorkflow(config).run(dataset, starts, train_idx, valid_idx, fold)
