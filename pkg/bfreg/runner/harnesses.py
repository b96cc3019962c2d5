"""
Task Harnesses
==============

One ``run_<task>`` method per task. Each method loads its inputs, trains or
generates, writes its task-specific files into the output directory, and
returns a ``HarnessOutcome`` that the manager turns into the report.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from ..checkpoint import save_field
from ..config import RunConfig
from ..core import RunTracker
from ..data import (
    ExpressionDataset, load_expression, load_series, make_split, make_stratified_split,
    save_expression, save_series, series_files, write_timepoints,
)
from ..discovery import DiscoveryConfig, run_discovery
from ..errors import ConfigError, DatasetError
from ..knowledge import KnowledgeBase, knowledge_files, load_knowledge, restrict_to_genes, save_knowledge
from ..model import BFRegModel
from ..numerics import make_generator, split_generator
from ..synth import (
    SynthSpec, gen_expression_static, gen_knowledge, gen_labels, gen_populations, gen_timeseries,
    spectral_radius,
)
from ..tasks import (
    pretrain_finetune, train_classification, train_forecast_recurrent, train_forecast_simultaneous,
    train_imputation,
)
from ..trajectory import load_trajectory, simulate, train_cnf

FORECAST_TRAINERS = {
    "simultaneous": train_forecast_simultaneous,
    "recurrent": train_forecast_recurrent,
}


@dataclass
class HarnessOutcome:
    metrics: Dict[str, Any]
    knowledge_files: List[Path] = field(default_factory=list)
    data_files: List[Path] = field(default_factory=list)
    model: Optional[BFRegModel] = None
    written: List[Path] = field(default_factory=list)


class TaskHarness:
    """Runs one resolved config with independent seeded streams for split, init, training and scoring."""

    def __init__(self, config: RunConfig, out: Path, tracker: RunTracker):
        self.config = config
        self.out = Path(out)
        self.tracker = tracker
        # split, init, train, extra
        self.streams = split_generator(make_generator(config.seed), 4)

    # --- inputs ---

    def knowledge_for(self, genes) -> KnowledgeBase:
        kb = load_knowledge(self.config.knowledge)
        restricted = restrict_to_genes(kb, genes)
        if restricted is not kb:
            logging.info(f"BFReg: knowledge restricted to measured genes ({restricted.summary()})")
        return restricted

    def expression(self) -> ExpressionDataset:
        return load_expression(self.config.data, self.config.mask)

    def expression_files(self) -> List[Path]:
        return [Path(p) for p in (self.config.data, self.config.mask) if p]

    def build_model(self, kb: KnowledgeBase, output_size: int) -> BFRegModel:
        levels = self.config.levels or kb.levels
        return BFRegModel(self.config.model_config(levels, output_size), kb, self.streams[1])

    def train(self, key: str, trainer, model: BFRegModel, *args, **kwargs):
        """Train directly, or fine-tune a new head on a pretrained trunk."""
        if self.config.pretrained:
            head = model.config.head
            return pretrain_finetune(model, head, key, *args, generator=self.streams[2],
                                     checkpoint=self.config.pretrained, tracker=self.tracker, **kwargs)
        return trainer(model, *args, self.streams[2], tracker=self.tracker, **kwargs)

    @staticmethod
    def fit_metrics(result) -> Dict[str, Any]:
        metrics = dict(result.metrics)
        metrics["final_loss"] = result.fit.losses[-1] if result.fit.losses else None
        metrics["best_epoch"] = result.fit.best_epoch
        metrics["best_val_loss"] = result.fit.best_val_loss
        return metrics

    # --- tasks ---

    def run_impute(self) -> HarnessOutcome:
        dataset = self.expression()
        kb = self.knowledge_for(dataset.genes)
        split = make_split(dataset.n_samples, self.streams[0], seed=self.config.seed)
        model = self.build_model(kb, kb.count(kb.levels[0]))
        result = self.train("impute", train_imputation, model, dataset, self.config.train_config(),
                            split=split)
        return HarnessOutcome(self.fit_metrics(result), knowledge_files(self.config.knowledge),
                              self.expression_files(), model)

    def run_classify(self) -> HarnessOutcome:
        dataset = self.expression()
        if dataset.labels is None:
            raise DatasetError(f"{self.config.data}: classification needs a 'label' column")
        kb = self.knowledge_for(dataset.genes)
        split = make_stratified_split(dataset.labels, self.streams[0], seed=self.config.seed)
        model = self.build_model(kb, dataset.n_classes)
        result = self.train("classify", train_classification, model, dataset, self.config.train_config(),
                            split=split)
        return HarnessOutcome(self.fit_metrics(result), knowledge_files(self.config.knowledge),
                              self.expression_files(), model)

    def run_forecast(self) -> HarnessOutcome:
        dataset = load_series(self.config.data)
        kb = self.knowledge_for(dataset.genes)
        n = kb.count(kb.levels[0])
        kind = self.config.forecaster
        output = n * self.config.horizon if kind == "simultaneous" else n
        split = make_split(dataset.n_series, self.streams[0], seed=self.config.seed)
        model = self.build_model(kb, output)
        result = self.train(f"forecast.{kind}", FORECAST_TRAINERS[kind], model, dataset,
                            self.config.horizon, self.config.train_config(), split=split)
        return HarnessOutcome(self.fit_metrics(result), knowledge_files(self.config.knowledge),
                              series_files(self.config.data), model)

    def run_trajectory(self) -> HarnessOutcome:
        batch, paths = load_trajectory(self.config.data)
        kb = self.knowledge_for(batch.genes)
        batch = batch.align(kb.nodes[kb.levels[0]])
        known = self.config.train_timestamps
        if len(batch) < known:
            raise DatasetError(f"{self.config.data}: {len(batch)} timestamps, training needs {known}")
        cnf = self.config.cnf_config()
        vector_field = cnf.build_field(kb, self.streams[1])
        result = train_cnf(batch.head(known), vector_field, cnf, self.streams[2], self.tracker)
        metrics: Dict[str, Any] = {
            "final_loss": result.losses[-1] if result.losses else None,
            "best_epoch": result.best_epoch,
            "baseline": result.baseline,
        }
        if known < len(batch):
            report = simulate(vector_field, batch.samples[known - 1], batch.timestamps[known - 1],
                              batch.timestamps[known:], truth=batch.samples[known:], steps=cnf.steps,
                              generator=self.streams[3])
            metrics["simulation"] = report.rows()
            metrics["mean_wasserstein"] = report.mean_distance
        written = [save_field(vector_field, self.out / "checkpoint.npz")]
        return HarnessOutcome(metrics, knowledge_files(self.config.knowledge), paths, written=written)

    def run_discover(self) -> HarnessOutcome:
        cfg = self.config
        forecast = cfg.data.endswith(".json")
        dataset = load_series(cfg.data) if forecast else self.expression()
        kb = self.knowledge_for(dataset.genes)
        levels = cfg.levels or kb.levels
        discovery = DiscoveryConfig(
            runs=cfg.runs, k=cfg.k, level=cfg.level, restrict_to_node=cfg.restrict_to_node,
            task="forecast" if forecast else "impute", horizon=cfg.horizon, workers=cfg.workers,
            model=cfg.model_config(levels, kb.count(kb.levels[0])), train=cfg.train_config())
        report = run_discovery(kb, dataset, cfg.node, discovery, self.streams[2], self.tracker)
        table = pd.DataFrame(report.frequency_table(),
                             columns=["source", "target", "frequency", "mean_intensity"])
        path = self.out / "frequency.tsv"
        table.to_csv(path, sep="\t", index=False, float_format="%.10g")
        data = series_files(cfg.data) if forecast else self.expression_files()
        return HarnessOutcome(report.to_dict(), knowledge_files(cfg.knowledge), data, written=[path])

    def run_synth(self) -> HarnessOutcome:
        cfg = self.config
        try:
            spec = SynthSpec(**{"seed": cfg.seed, **cfg.synth})
        except TypeError as e:
            raise ConfigError(f"invalid synth settings: {e}") from None
        kb = gen_knowledge(spec, self.streams[0])
        manifest = save_knowledge(kb, self.out / "knowledge")
        static = gen_expression_static(kb, spec, cfg.samples, self.streams[1])
        if cfg.classes:
            static = ExpressionDataset(static.values, static.genes, gen_labels(kb, static, cfg.classes),
                                       static.mask)
        mask_path = self.out / "expression.mask.csv" if spec.mask_probability else None
        data = save_expression(static, self.out / "expression.csv", mask_path)
        series = gen_timeseries(kb, spec, cfg.series, cfg.series_steps, self.streams[2])
        series_manifest = save_series(series, self.out / "series")
        timestamps, frames = gen_populations(kb, spec, cfg.cells, cfg.series_steps, self.streams[3])
        trajectory = write_timepoints(self.out / "trajectory", timestamps, frames, series.genes)
        gene = kb.levels[0]
        metrics = {
            "knowledge": kb.summary(),
            "spec": spec.to_dict(),
            "spectral_radius": spectral_radius(spec.beta * np.asarray(kb.adjacency[gene])),
            "samples": static.n_samples,
            "series": series.n_series,
            "cells": cfg.cells,
            "files": {
                "knowledge": manifest.name,
                "expression": data[0].name,
                "series": f"series/{series_manifest.name}",
                "trajectory": f"trajectory/{trajectory.name}",
            },
        }
        data_files = data + series_files(series_manifest) + series_files(trajectory)
        return HarnessOutcome(metrics, knowledge_files(manifest), data_files)

    def run_validate(self) -> HarnessOutcome:
        kb = load_knowledge(self.config.knowledge)
        summary = kb.summary()
        metrics = {
            "levels": list(kb.levels),
            "summary": summary,
            "total_nodes": sum(s["nodes"] for s in summary.values()),
            "total_edges": sum(s["edges"] for s in summary.values()),
        }
        logging.info(f"BFReg: knowledge is valid: {summary}")
        return HarnessOutcome(metrics, knowledge_files(self.config.knowledge))
