"""Plain-text fixture format for problems, losses, trainer outputs and tasks.

A fixture file is a sequence of whitespace-separated tokens.  Records:

    problem                      header introducing an affine inner problem
    matrix <name> <rows> <cols>  followed by rows*cols row-major entries
    vector <name> <len>          followed by len entries
    scalar <name> <value>
    tag <name> <token>

Entries are written with 17 significant digits, which round-trips float64
exactly.  Lines starting with ``#`` are comments.
"""

from __future__ import annotations

from typing import Iterable, TextIO

import numpy as np

from .inner import AffineInnerProblem
from .metalin import LinearTask
from .outer import QuadraticOuterLoss, TrainedOuter


class FixtureFormatError(ValueError):
    """Malformed fixture file."""


def format_float(x: float) -> str:
    return f"{float(x):.17g}"


def _write_matrix(f: TextIO, name: str, a: np.ndarray) -> None:
    a = np.asarray(a, dtype=float)
    f.write(f"matrix {name} {a.shape[0]} {a.shape[1]}\n")
    for row in a:
        f.write(" ".join(format_float(x) for x in row) + "\n")


def _write_vector(f: TextIO, name: str, v: np.ndarray) -> None:
    v = np.asarray(v, dtype=float).reshape(-1)
    f.write(f"vector {name} {v.shape[0]}\n")
    f.write(" ".join(format_float(x) for x in v) + "\n")


class _TokenReader:
    def __init__(self, f: TextIO):
        self._tokens: list[str] = []
        for line in f:
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            self._tokens.extend(stripped.split())
        self._pos = 0

    def next(self, what: str) -> str:
        if self._pos >= len(self._tokens):
            raise FixtureFormatError(f"unexpected end of file, expected {what}")
        tok = self._tokens[self._pos]
        self._pos += 1
        return tok

    def expect(self, literal: str) -> None:
        tok = self.next(repr(literal))
        if tok != literal:
            raise FixtureFormatError(f"expected {literal!r}, got {tok!r}")

    def next_int(self, what: str) -> int:
        tok = self.next(what)
        try:
            return int(tok)
        except ValueError as exc:
            raise FixtureFormatError(f"expected integer {what}, got {tok!r}") from exc

    def next_float(self, what: str) -> float:
        tok = self.next(what)
        try:
            return float(tok)
        except ValueError as exc:
            raise FixtureFormatError(f"expected number {what}, got {tok!r}") from exc

    def read_matrix(self, name: str) -> np.ndarray:
        self.expect("matrix")
        self.expect(name)
        rows = self.next_int("rows")
        cols = self.next_int("cols")
        data = [self.next_float(f"{name} entry") for _ in range(rows * cols)]
        return np.array(data).reshape(rows, cols)

    def read_vector(self, name: str) -> np.ndarray:
        self.expect("vector")
        self.expect(name)
        n = self.next_int("length")
        return np.array([self.next_float(f"{name} entry") for _ in range(n)])


def save_problem(f: TextIO, p: AffineInnerProblem) -> None:
    f.write("problem\n")
    _write_matrix(f, "k_in", p.k_in)
    _write_matrix(f, "b", p.b)
    _write_matrix(f, "u", p.u)
    _write_vector(f, "c", p.c)


def load_problem(f: TextIO) -> AffineInnerProblem:
    r = _TokenReader(f)
    r.expect("problem")
    return _load_problem_body(r)


def _load_problem_body(r: _TokenReader) -> AffineInnerProblem:
    k_in = r.read_matrix("k_in")
    b = r.read_matrix("b")
    u = r.read_matrix("u")
    c = r.read_vector("c")
    return AffineInnerProblem(k_in=k_in, b=b, u=u, c=c)


def save_outer_loss(f: TextIO, loss: QuadraticOuterLoss) -> None:
    f.write("outer_loss\n")
    _write_matrix(f, "k_out", loss.k_out)
    _write_vector(f, "omega", loss.omega)


def load_outer_loss(f: TextIO) -> QuadraticOuterLoss:
    r = _TokenReader(f)
    r.expect("outer_loss")
    return QuadraticOuterLoss(k_out=r.read_matrix("k_out"), omega=r.read_vector("omega"))


def save_trained(f: TextIO, trained: TrainedOuter) -> None:
    f.write("trained_outer\n")
    f.write(f"tag method {trained.method}\n")
    f.write(f"scalar n_train {trained.n_train}\n")
    f.write(f"scalar residual {format_float(trained.residual)}\n")
    f.write(f"scalar steps_taken {trained.steps_taken}\n")
    _write_vector(f, "theta", trained.theta)


def load_trained(f: TextIO) -> TrainedOuter:
    r = _TokenReader(f)
    r.expect("trained_outer")
    r.expect("tag")
    r.expect("method")
    method = r.next("method tag")
    r.expect("scalar")
    r.expect("n_train")
    n_train = r.next_int("n_train")
    r.expect("scalar")
    r.expect("residual")
    residual = r.next_float("residual")
    r.expect("scalar")
    r.expect("steps_taken")
    steps = r.next_int("steps_taken")
    theta = r.read_vector("theta")
    return TrainedOuter(theta=theta, method=method, n_train=n_train,
                        residual=residual, steps_taken=steps)


def save_tasks(f: TextIO, tasks: Iterable[LinearTask]) -> None:
    tasks = list(tasks)
    f.write(f"tasks {len(tasks)}\n")
    for task in tasks:
        _write_matrix(f, "x_train", task.x_train)
        _write_vector(f, "y_train", task.y_train)
        _write_matrix(f, "x_val", task.x_val)
        _write_vector(f, "y_val", task.y_val)


def load_tasks(f: TextIO) -> list[LinearTask]:
    r = _TokenReader(f)
    r.expect("tasks")
    count = r.next_int("task count")
    tasks = []
    for _ in range(count):
        x_train = r.read_matrix("x_train")
        y_train = r.read_vector("y_train")
        x_val = r.read_matrix("x_val")
        y_val = r.read_vector("y_val")
        tasks.append(LinearTask(x_train=x_train, y_train=y_train,
                                x_val=x_val, y_val=y_val))
    return tasks
