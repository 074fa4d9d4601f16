"""Server-side state: confidential tables, budget ledgers, sessions.

Confidential counts live only here; every payload leaving the store goes
through the view builders in app.py, which expose DP outputs exclusively.
Persistence is append-only JSON lines (datasets, ledger charges, session
events); recovery replays the files and recomputes every posterior from the
stored releases, which reproduces the served state exactly because posterior
evaluation is seeded deterministically by the release history.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..calibration import (
    build_psi_table,
    calibration_cache_key,
    lfc_threshold,
    load_cached_calibration,
    monte_carlo_null_quantile,
    neyman_threshold,
    store_cached_calibration,
)
from ..errors import BudgetExhaustedError, DomainError
from ..exact import DesignSizes, OutcomeTable
from ..ledger import BudgetLedger, append_jsonl, read_jsonl
from ..mechanisms import NoisyRelease, release_counts
from ..posterior import (
    MAX_GRID_CELLS,
    p_posterior,
    posterior_from_releases,
)
from ..priors import CountPrior, prior_from_spec

# designs whose full lattice fits are calibrated synchronously
SYNC_CALIBRATION_MAX_N = 120


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    data_dir: str = "dpfrt-data"
    token: str | None = None
    seed: int | None = None
    posterior_draws: int = 100_000

    @classmethod
    def load(cls, path: str | None = None, **overrides) -> "ServiceConfig":
        values: dict = {}
        if path:
            values.update(json.loads(Path(path).read_text()))
        env_map = {
            "host": "DPFRT_HOST",
            "port": "DPFRT_PORT",
            "data_dir": "DPFRT_DATA_DIR",
            "token": "DPFRT_TOKEN",
            "seed": "DPFRT_SEED",
        }
        for key, env in env_map.items():
            if env in os.environ:
                values[key] = os.environ[env]
        for key, value in overrides.items():
            if value is not None:
                values[key] = value
        if "port" in values:
            values["port"] = int(values["port"])
        if "seed" in values and values["seed"] is not None:
            values["seed"] = int(values["seed"])
        return cls(**values)


@dataclass
class SessionSettings:
    epsilon: float
    prior_spec: dict
    alpha: float
    losses: tuple[float, float, float]
    eta: float

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "prior": self.prior_spec,
            "alpha": self.alpha,
            "losses": list(self.losses),
            "eta": self.eta,
        }


@dataclass
class Dataset:
    dataset_id: str
    table: OutcomeTable
    cap: float | None
    ledger: BudgetLedger
    lock: threading.Lock = field(default_factory=threading.Lock)


@dataclass
class Session:
    session_id: str
    dataset_id: str
    settings: SessionSettings
    releases: list[NoisyRelease] = field(default_factory=list)


def _release_record(release: NoisyRelease) -> dict:
    return {
        "n11_tilde": release.n11_tilde,
        "n01_tilde": release.n01_tilde,
        "epsilon": release.epsilon,
        "released_at": release.released_at,
        "release_id": release.release_id,
    }


def _release_from_record(record: dict, design: DesignSizes) -> NoisyRelease:
    return NoisyRelease(design=design, **record)


class Store:
    """Thread-safe registry of datasets and sessions with file persistence."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.data_dir = Path(config.data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.datasets: dict[str, Dataset] = {}
        self.sessions: dict[str, Session] = {}
        self.idempotency: dict[str, tuple[int, dict]] = {}
        self.jobs: dict[str, dict] = {}
        self._registry_lock = threading.Lock()
        self._rng = np.random.default_rng(config.seed)
        self._rng_lock = threading.Lock()
        self._executor = ThreadPoolExecutor(max_workers=2)
        self._recover()

    # -- persistence -----------------------------------------------------

    @property
    def _datasets_path(self) -> Path:
        return self.data_dir / "datasets.jsonl"

    @property
    def _ledger_path(self) -> Path:
        return self.data_dir / "ledger.jsonl"

    @property
    def _sessions_path(self) -> Path:
        return self.data_dir / "sessions.jsonl"

    @property
    def cache_dir(self) -> Path:
        return self.data_dir / "cache"

    def _recover(self):
        ledger_records = (
            read_jsonl(self._ledger_path) if self._ledger_path.exists() else []
        )
        if self._datasets_path.exists():
            for rec in read_jsonl(self._datasets_path):
                table = OutcomeTable(
                    DesignSizes(rec["n1"], rec["n0"]), rec["n11"], rec["n01"]
                )
                ledger = BudgetLedger.from_records(
                    rec["dataset_id"],
                    ledger_records,
                    cap=rec["cap"],
                    sink=lambda r: append_jsonl(self._ledger_path, r),
                )
                self.datasets[rec["dataset_id"]] = Dataset(
                    dataset_id=rec["dataset_id"],
                    table=table,
                    cap=rec["cap"],
                    ledger=ledger,
                )
        if self._sessions_path.exists():
            for event in read_jsonl(self._sessions_path):
                dataset = self.datasets.get(event["dataset_id"])
                if dataset is None:
                    continue
                if event["type"] == "create_session":
                    settings = SessionSettings(
                        epsilon=event["settings"]["epsilon"],
                        prior_spec=event["settings"]["prior"],
                        alpha=event["settings"]["alpha"],
                        losses=tuple(event["settings"]["losses"]),
                        eta=event["settings"]["eta"],
                    )
                    session = Session(
                        session_id=event["session_id"],
                        dataset_id=event["dataset_id"],
                        settings=settings,
                    )
                    session.releases.append(
                        _release_from_record(event["release"], dataset.table.design)
                    )
                    self.sessions[session.session_id] = session
                elif event["type"] == "topup":
                    session = self.sessions.get(event["session_id"])
                    if session is not None:
                        session.releases.append(
                            _release_from_record(
                                event["release"], dataset.table.design
                            )
                        )

    # -- randomness ------------------------------------------------------

    def release_rng(self) -> np.random.Generator:
        """Fresh generator for DP noise; unpredictable unless a test seed
        was configured."""
        with self._rng_lock:
            seed = self._rng.integers(0, 2**63 - 1)
        return np.random.default_rng(int(seed))

    @staticmethod
    def posterior_rng(session: Session) -> np.random.Generator:
        """Deterministic generator for posterior sampling, derived from the
        release history so replay reproduces served posteriors exactly."""
        digest = hashlib.sha256(
            json.dumps(
                [session.session_id] + [r.release_id for r in session.releases]
            ).encode()
        ).digest()
        return np.random.default_rng(
            np.random.SeedSequence(int.from_bytes(digest[:8], "big"))
        )

    # -- idempotency -----------------------------------------------------

    def idempotent(self, key: str | None, scope: str):
        if key is None:
            return None
        return self.idempotency.get(f"{scope}:{key}")

    def remember(self, key: str | None, scope: str, status: int, payload: dict):
        if key is not None:
            self.idempotency[f"{scope}:{key}"] = (status, payload)

    # -- datasets and sessions -------------------------------------------

    def create_dataset(self, table: OutcomeTable, cap: float | None) -> Dataset:
        dataset_id = uuid.uuid4().hex
        ledger = BudgetLedger(
            dataset_id, cap=cap, sink=lambda r: append_jsonl(self._ledger_path, r)
        )
        dataset = Dataset(dataset_id=dataset_id, table=table, cap=cap, ledger=ledger)
        with self._registry_lock:
            self.datasets[dataset_id] = dataset
        append_jsonl(
            self._datasets_path,
            {
                "dataset_id": dataset_id,
                "n1": table.design.n1,
                "n0": table.design.n0,
                "n11": table.n11,
                "n01": table.n01,
                "cap": cap,
            },
        )
        return dataset

    def create_session(self, dataset: Dataset, settings: SessionSettings) -> Session:
        prior_from_spec(settings.prior_spec)  # validate early
        with dataset.lock:
            release = release_counts(
                dataset.table,
                settings.epsilon,
                self.release_rng(),
                ledger=dataset.ledger,
            )
            session = Session(
                session_id=uuid.uuid4().hex,
                dataset_id=dataset.dataset_id,
                settings=settings,
            )
            session.releases.append(release)
            with self._registry_lock:
                self.sessions[session.session_id] = session
            append_jsonl(
                self._sessions_path,
                {
                    "type": "create_session",
                    "session_id": session.session_id,
                    "dataset_id": dataset.dataset_id,
                    "settings": settings.to_dict(),
                    "release": _release_record(release),
                },
            )
        return session

    def topup_session(self, session: Session, epsilon_plus: float) -> NoisyRelease:
        dataset = self.datasets[session.dataset_id]
        with dataset.lock:
            release = release_counts(
                dataset.table,
                epsilon_plus,
                self.release_rng(),
                ledger=dataset.ledger,
            )
            session.releases.append(release)
            append_jsonl(
                self._sessions_path,
                {
                    "type": "topup",
                    "session_id": session.session_id,
                    "dataset_id": session.dataset_id,
                    "release": _release_record(release),
                },
            )
        return release

    # -- posterior evaluation ---------------------------------------------

    def session_posterior(self, session: Session):
        prior = prior_from_spec(session.settings.prior_spec)
        post = posterior_from_releases(prior, session.releases)
        return p_posterior(
            post,
            rng=self.posterior_rng(session),
            draws=self.config.posterior_draws,
        )

    # -- calibration ------------------------------------------------------

    def calibration_payload(
        self, dataset: Dataset, session: Session, method: str,
        alpha_freq: float, eta: float | None,
    ) -> tuple[int, dict]:
        """200 + result when cached or small; 202 + job handle otherwise."""
        settings = session.settings
        design = dataset.table.design
        prior = prior_from_spec(settings.prior_spec)
        epsilon = session.releases[0].epsilon
        key = calibration_cache_key(
            design, epsilon, prior, settings.alpha, alpha_freq, method, eta
        )
        cached = load_cached_calibration(self.cache_dir, key)
        if cached is not None:
            return 200, cached
        release_pair = session.releases[0].clipped()

        def compute() -> dict:
            result = self._run_calibration(
                design, epsilon, prior, settings.alpha, alpha_freq, method, eta,
                release_pair,
            )
            store_cached_calibration(self.cache_dir, key, result)
            return result

        if design.n <= SYNC_CALIBRATION_MAX_N:
            return 200, compute()
        job_id = uuid.uuid4().hex
        self.jobs[job_id] = {"status": "pending"}

        def run_job():
            try:
                result = compute()
                self.jobs[job_id] = {"status": "done", "result": result}
            except Exception as exc:  # surfaced through polling
                self.jobs[job_id] = {"status": "failed", "message": str(exc)}

        self._executor.submit(run_job)
        return 202, {"job_id": job_id, "status": "pending"}

    def _run_calibration(
        self, design, epsilon, prior: CountPrior, alpha, alpha_freq, method, eta,
        release_pair,
    ) -> dict:
        cells = (design.n1 + 1) * (design.n0 + 1)
        if cells <= MAX_GRID_CELLS:
            table = build_psi_table(design, epsilon, prior, alpha)
            if method == "worst-case":
                return lfc_threshold(
                    design, epsilon, prior, alpha, alpha_freq, psi_table=table
                ).to_dict()
            return neyman_threshold(
                release_pair, design, epsilon, prior, alpha, alpha_freq, eta,
                psi_table=table,
            ).to_dict()
        # Monte Carlo fallback at scales where the lattice cannot be built:
        # conservative per-K sampled quantiles on a coarse K grid
        rng = np.random.default_rng(0)
        level = 1.0 - (alpha_freq if method == "worst-case" else alpha_freq - eta)
        k_grid = np.unique(
            np.linspace(0, design.n, 64).astype(int)
        )
        quantiles = {
            int(K): monte_carlo_null_quantile(
                int(K), design, epsilon, prior, alpha, level, 1000, rng
            ).estimate
            for K in k_grid
        }
        return {
            "method": method,
            "t_star": max(quantiles.values()),
            "alpha": alpha,
            "alpha_freq": alpha_freq,
            "epsilon": epsilon,
            "eta": eta,
            "per_k": quantiles,
            "monte_carlo": True,
            "k_grid": [int(k) for k in k_grid],
        }
