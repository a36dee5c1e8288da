"""Exact backdoor adjustment on a finite structural causal model.

Graph: R -> C, R -> Z, (C, Z) -> M -> Y. The relation variable R confounds
the causal feature C and the shortcut feature Z; the path
C <- R -> Z -> M -> Y is the backdoor path, and Z blocks it. Everything is
computed by enumerating the full joint table.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

MAX_CARD = 16
VARIABLES = ("R", "C", "Z", "M", "Y")
ROW_TOL = 1e-12


class SCMError(ValueError):
    pass


class PositivityError(SCMError):
    pass


@dataclass
class DiscreteSCM:
    p_r: np.ndarray  # [R]
    p_c_given_r: np.ndarray  # [R, C]
    p_z_given_r: np.ndarray  # [R, Z]
    p_m_given_cz: np.ndarray  # [C, Z, M]
    p_y_given_m: np.ndarray  # [M, Y]
    name: str = ""
    seed: int | None = None

    def __post_init__(self):
        for f in ("p_r", "p_c_given_r", "p_z_given_r", "p_m_given_cz", "p_y_given_m"):
            setattr(self, f, np.asarray(getattr(self, f), dtype=np.float64))
        self.validate()

    @property
    def card(self) -> dict[str, int]:
        n_r, n_c = self.p_c_given_r.shape
        n_z = self.p_z_given_r.shape[1]
        n_m, n_y = self.p_y_given_m.shape
        return {"R": n_r, "C": n_c, "Z": n_z, "M": n_m, "Y": n_y}

    def validate(self) -> None:
        card = self.card
        if any(n < 1 or n > MAX_CARD for n in card.values()):
            raise SCMError(f"cardinalities must lie in [1, {MAX_CARD}], got {card}")
        expected = {
            "p_r": (card["R"],),
            "p_c_given_r": (card["R"], card["C"]),
            "p_z_given_r": (card["R"], card["Z"]),
            "p_m_given_cz": (card["C"], card["Z"], card["M"]),
            "p_y_given_m": (card["M"], card["Y"]),
        }
        for name, shape in expected.items():
            table = getattr(self, name)
            if table.shape != shape:
                raise SCMError(f"{name} has shape {table.shape}, expected {shape}")
            if np.any(table < 0):
                raise SCMError(f"{name} has negative entries")
            if np.any(np.abs(table.sum(axis=-1) - 1.0) > ROW_TOL):
                raise SCMError(f"{name} rows must sum to 1")


def joint(scm: DiscreteSCM) -> np.ndarray:
    """P(R, C, Z, M, Y) as a 5-D array (axes in that order)."""
    return np.einsum(
        "r,rc,rz,czm,my->rczmy",
        scm.p_r,
        scm.p_c_given_r,
        scm.p_z_given_r,
        scm.p_m_given_cz,
        scm.p_y_given_m,
    )


def observational(scm: DiscreteSCM, c: int) -> np.ndarray:
    """P(Y | C = c)."""
    pc_y = joint(scm).sum(axis=(0, 2, 3))  # [C, Y]
    mass = pc_y[c].sum()
    if mass <= 0:
        raise PositivityError(f"P(C={c}) = 0; conditional undefined")
    return pc_y[c] / mass


def mutilate(scm: DiscreteSCM, c: int) -> DiscreteSCM:
    """Cut R -> C and clamp C = c."""
    forced = np.zeros_like(scm.p_c_given_r)
    forced[:, c] = 1.0
    return DiscreteSCM(
        scm.p_r, forced, scm.p_z_given_r, scm.p_m_given_cz, scm.p_y_given_m, scm.name, scm.seed
    )


def interventional_truth(scm: DiscreteSCM, c: int) -> np.ndarray:
    """P(Y | do(C = c)) by enumerating the mutilated model."""
    if not 0 <= c < scm.card["C"]:
        raise SCMError(f"C has no value {c}")
    return joint(mutilate(scm, c)).sum(axis=(0, 1, 2, 3))


def backdoor_adjust(scm: DiscreteSCM, c: int) -> np.ndarray:
    """sum_z P(Y | C = c, z) P(z), from the observational joint only."""
    j = joint(scm)
    p_czy = j.sum(axis=(0, 3))  # [C, Z, Y]
    p_z = p_czy.sum(axis=(0, 2))
    p_cz = p_czy.sum(axis=2)
    out = np.zeros(scm.card["Y"])
    for z, pz in enumerate(p_z):
        if pz <= 0:
            continue
        if p_cz[c, z] <= 0:
            raise PositivityError(f"stratum Z={z} has P(C={c}, Z={z}) = 0 but P(Z={z}) > 0")
        out += p_czy[c, z] / p_cz[c, z] * pz
    return out


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


# ---------------------------------------------------------------- constructors


def _rows(rng: np.random.Generator, n: int, k: int, concentration: float = 1.0) -> np.ndarray:
    return rng.dirichlet(np.full(k, concentration), size=n)


def random_scm(seed: int, card: dict[str, int] | None = None, max_card: int = 4) -> DiscreteSCM:
    """Random strictly positive SCM; unspecified cardinalities drawn from [2, max_card]."""
    rng = np.random.default_rng(seed)
    card = dict(card or {})
    for v in VARIABLES:
        card.setdefault(v, int(rng.integers(2, max_card + 1)))
    n_r, n_c, n_z, n_m, n_y = (card[v] for v in VARIABLES)
    return DiscreteSCM(
        rng.dirichlet(np.ones(n_r)),
        _rows(rng, n_r, n_c),
        _rows(rng, n_r, n_z),
        _rows(rng, n_c * n_z, n_m).reshape(n_c, n_z, n_m),
        _rows(rng, n_m, n_y),
        name="random",
        seed=seed,
    )


def _peaked(rng, n_rows: int, k: int, strength: float) -> np.ndarray:
    """Row r puts ``strength`` extra mass on value r mod k, rest Dirichlet."""
    base = _rows(rng, n_rows, k, 2.0)
    onehot = np.eye(k)[np.arange(n_rows) % k]
    return strength * onehot + (1.0 - strength) * base


def unconfounded_scm(seed: int = 7) -> DiscreteSCM:
    rng = np.random.default_rng(seed)
    p_c = _rows(rng, 1, 2, 2.0)
    return DiscreteSCM(
        np.array([0.5, 0.5]),
        np.repeat(p_c, 2, axis=0),
        _peaked(rng, 2, 2, 0.8),
        _rows(rng, 4, 4, 0.5).reshape(2, 2, 4),
        _rows(rng, 4, 3, 0.5),
        name="unconfounded",
        seed=seed,
    )


def confounded_scm(seed: int = 7) -> DiscreteSCM:
    """R drives both C and Z strongly; M depends on both."""
    rng = np.random.default_rng(seed)
    m_table = np.empty((2, 2, 4))
    for c in range(2):
        for z in range(2):
            m_table[c, z] = 0.85 * np.eye(4)[2 * c + z] + 0.15 * rng.dirichlet(np.ones(4))
    y_table = 0.8 * np.eye(3)[[0, 1, 1, 2]] + 0.2 * _rows(rng, 4, 3)
    return DiscreteSCM(
        np.array([0.5, 0.5]),
        _peaked(rng, 2, 2, 0.8),
        _peaked(rng, 2, 2, 0.8),
        m_table,
        y_table,
        name="confounded",
        seed=seed,
    )


def shortcut_scm(seed: int = 7) -> DiscreteSCM:
    """M follows Z almost entirely, so C's association with Y is mostly spurious."""
    rng = np.random.default_rng(seed)
    m_table = np.empty((2, 2, 4))
    for c in range(2):
        for z in range(2):
            m_table[c, z] = 0.9 * np.eye(4)[3 * z] + 0.1 * rng.dirichlet(np.ones(4))
    return DiscreteSCM(
        np.array([0.5, 0.5]),
        _peaked(rng, 2, 2, 0.85),
        _peaked(rng, 2, 2, 0.85),
        m_table,
        0.8 * np.eye(3)[[0, 1, 1, 2]] + 0.2 * _rows(rng, 4, 3),
        name="shortcut",
        seed=seed,
    )


CANNED = {
    "unconfounded": unconfounded_scm,
    "confounded": confounded_scm,
    "shortcut": shortcut_scm,
}


def canned(name: str, seed: int = 7) -> DiscreteSCM:
    try:
        return CANNED[name](seed)
    except KeyError:
        raise SCMError(f"unknown demo SCM {name!r}; choose from {', '.join(CANNED)}") from None


# ---------------------------------------------------------------- reporting


@dataclass
class DemoRow:
    c: int
    observational: np.ndarray
    interventional: np.ndarray
    backdoor: np.ndarray

    @property
    def gap(self) -> float:
        return total_variation(self.observational, self.interventional)

    @property
    def identity_error(self) -> float:
        return total_variation(self.backdoor, self.interventional)


def demo(scm: DiscreteSCM) -> list[DemoRow]:
    return [
        DemoRow(c, observational(scm, c), interventional_truth(scm, c), backdoor_adjust(scm, c))
        for c in range(scm.card["C"])
    ]


def format_table(scm: DiscreteSCM, rows: list[DemoRow]) -> str:
    def dist(p):
        return "[" + ", ".join(f"{x:.4f}" for x in p) + "]"

    lines = [f"SCM {scm.name!r} (seed {scm.seed}), cardinalities {scm.card}"]
    header = f"{'c':>2}  {'P(Y|C=c)':<28}{'P(Y|do(C=c))':<28}{'backdoor':<28}{'TV gap':>8}"
    lines.append(header)
    for r in rows:
        lines.append(
            f"{r.c:>2}  {dist(r.observational):<28}{dist(r.interventional):<28}"
            f"{dist(r.backdoor):<28}{r.gap:>8.4f}"
        )
    return "\n".join(lines)


def demo_csv(rows: list[DemoRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["c", "y", "observational", "interventional", "backdoor", "tv_gap"])
    for r in rows:
        for y in range(len(r.observational)):
            w.writerow([r.c, y, repr(float(r.observational[y])), repr(float(r.interventional[y])),
                        repr(float(r.backdoor[y])), repr(r.gap)])
    return buf.getvalue()
