"""Parameter-shift differentiation of network outputs.

Expectation values of circuits built from rotation-like gates are sinusoidal
in every gate angle, so all shift rules here are exact (not approximations).
Spatial derivatives chain the per-site angle derivatives with the registry's
analytic angle partials.

Every circuit evaluation goes through one counted entry point; the per-sample
evaluation totals of each derivative schedule are part of this module's
contract (see the complexity module for the closed forms they must equal).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from . import qnet

DEFAULT_SHIFT = np.pi / 2


@dataclass
class EvalCounter:
    count: int = 0

    def tick(self, k: int = 1):
        self.count += k


def _eval(net, theta, x, shifts, counter):
    if counter is not None:
        counter.tick()
    return qnet.evaluate_shifted(net, x, shifts, theta)


def _check_shift(s):
    if abs(np.sin(s)) < 1e-12:
        raise ValueError("shift s must not be a multiple of pi")


def angle_derivative(net, x, gate_id, s=DEFAULT_SHIFT, theta=None, counter=None):
    """d<C>/d(angle) = [g(+s) - g(-s)] / (2 sin s), exact for any valid s."""
    _check_shift(s)
    theta = net.theta if theta is None else theta
    gp = _eval(net, theta, x, {gate_id: +s}, counter)
    gm = _eval(net, theta, x, {gate_id: -s}, counter)
    return (gp - gm) / (2 * np.sin(s))


def angle_second_derivative_same(net, x, gate_id, variant="three_point",
                                 theta=None, counter=None):
    """Second derivative with respect to one angle.

    two_point: [g(+pi) - g] / 2, two evaluations.
    three_point: [g(+pi/2) - 2 g + g(-pi/2)] / 2, three evaluations, and the
    first derivative [g(+pi/2) - g(-pi/2)] / 2 comes out of the same values —
    returned as a (second, first) pair.
    """
    theta = net.theta if theta is None else theta
    if variant == "two_point":
        gp = _eval(net, theta, x, {gate_id: np.pi}, counter)
        g0 = _eval(net, theta, x, {}, counter)
        return (gp - g0) / 2
    if variant == "three_point":
        gp = _eval(net, theta, x, {gate_id: +np.pi / 2}, counter)
        g0 = _eval(net, theta, x, {}, counter)
        gm = _eval(net, theta, x, {gate_id: -np.pi / 2}, counter)
        return (gp - 2 * g0 + gm) / 2, (gp - gm) / 2
    raise ValueError(f"unknown variant {variant!r}")


def angle_mixed_derivative(net, x, gate_id_a, gate_id_b, s=DEFAULT_SHIFT,
                           theta=None, counter=None):
    """Mixed second derivative over two distinct angles: four evaluations."""
    if gate_id_a == gate_id_b:
        raise ValueError("mixed rule needs two distinct gates")
    _check_shift(s)
    theta = net.theta if theta is None else theta
    gpp = _eval(net, theta, x, {gate_id_a: +s, gate_id_b: +s}, counter)
    gpm = _eval(net, theta, x, {gate_id_a: +s, gate_id_b: -s}, counter)
    gmp = _eval(net, theta, x, {gate_id_a: -s, gate_id_b: +s}, counter)
    gmm = _eval(net, theta, x, {gate_id_a: -s, gate_id_b: -s}, counter)
    return (gpp - gpm - gmp + gmm) / (4 * np.sin(s) ** 2)


def order_d_shift_rule(g, order, reduced=True, counter=None):
    """Order-d derivative of a sinusoidal g from equally spaced shifts.

    g(delta) must return the target function offset by delta in its angle.
    The reduced form always spends exactly `order` evaluations: the g(+pi)
    term is evaluated even when its coefficient (1 + (-1)^d) vanishes for odd
    orders. The non-reduced form spends order + 1 evaluations; both agree
    because g is 2*pi periodic.
    """
    d = order
    if d < 2:
        raise ValueError("order must be at least 2")
    coef = (2 * np.sin(np.pi / d)) ** (-d)

    def call(delta):
        if counter is not None:
            counter.tick()
        return g(delta)

    if reduced:
        total = (1 + (-1) ** d) * call(np.pi)
        for i in range(1, d):
            total += (-1) ** (i + d) * comb(d, i) * call(2 * np.pi * i / d - np.pi)
        return coef * total
    total = 0.0
    for i in range(0, d + 1):
        total += (-1) ** (i + d) * comb(d, i) * call(2 * np.pi * i / d - np.pi)
    return coef * total


def angle_derivative_order_d(net, x, gate_id, order, reduced=True,
                             theta=None, counter=None):
    theta_ = net.theta if theta is None else theta
    return order_d_shift_rule(
        lambda delta: _eval(net, theta_, x, {gate_id: delta}, counter),
        order, reduced=reduced)


def _sites_by_coordinate(net, theta):
    deps = {i: [] for i in range(net.d_in)}
    for site in net.sites:
        for i in site.dependencies(theta):
            deps[i].append(site)
    return deps


def spatial_gradient(net, x, theta=None, s=DEFAULT_SHIFT, counter=None):
    """d u / d x_i by chaining angle derivatives; 2 evaluations per dependent
    site per coordinate, no caching across coordinates."""
    theta = net.theta if theta is None else theta
    deps = _sites_by_coordinate(net, theta)
    grad = np.zeros(net.d_in)
    for i in range(net.d_in):
        for site in deps[i]:
            gj = angle_derivative(net, x, site.gate_id, s, theta, counter)
            grad[i] += site.partial(x, theta, i) * gj
    return grad


def _hessian_entry(net, theta, x, i, j, sites_i, sites_j, s, counter):
    acc = 0.0
    for a in sites_i:
        for b in sites_j:
            if a.gate_id == b.gate_id:
                continue
            gab = angle_mixed_derivative(net, x, a.gate_id, b.gate_id, s, theta, counter)
            acc += a.partial(x, theta, i) * b.partial(x, theta, j) * gab
    for a in sites_i:
        if a not in sites_j:
            continue
        gaa, ga = angle_second_derivative_same(net, x, a.gate_id, "three_point",
                                               theta, counter)
        acc += a.partial(x, theta, i) * a.partial(x, theta, j) * gaa
        acc += a.partial2(x, theta, i, j) * ga
    return acc


def spatial_hessian(net, x, theta=None, commuting=True, s=DEFAULT_SHIFT, counter=None):
    """Full Hessian of u: mixed-site terms via the four-evaluation rule,
    same-site terms via the three-point rule (whose free first derivatives
    feed the second-order chain term).

    With `commuting` set only the upper triangle is evaluated and mirrored;
    otherwise every ordered (i, j) pair is computed independently.
    """
    theta = net.theta if theta is None else theta
    deps = _sites_by_coordinate(net, theta)
    d = net.d_in
    H = np.zeros((d, d))
    for i in range(d):
        js = range(i, d) if commuting else range(d)
        for j in js:
            H[i, j] = _hessian_entry(net, theta, x, i, j, deps[i], deps[j], s, counter)
            if commuting and j > i:
                H[j, i] = H[i, j]
    return H


# ---------------------------------------------------------------------------
# Evaluation tape: loss assembly records every circuit evaluation as a node so
# the theta gradient can revisit each one with shifted trainable angles.
# ---------------------------------------------------------------------------


@dataclass
class EvalNode:
    x: np.ndarray
    shifts: dict
    value: float
    weight: float = 0.0  # d(loss)/d(node value), set during loss assembly


@dataclass
class Coef:
    """A chain-rule coefficient together with its theta sensitivity."""

    value: float
    dtheta: dict  # flat theta index -> derivative of the coefficient


def _coef_of(site, x, theta, i) -> Coef:
    return Coef(site.partial(x, theta, i), site.partial_theta_grad(x, theta, i))


def _coef_mul(a: Coef, b: Coef) -> Coef:
    d = {k: v * b.value for k, v in a.dtheta.items()}
    for k, v in b.dtheta.items():
        d[k] = d.get(k, 0.0) + a.value * v
    return Coef(a.value * b.value, d)


@dataclass
class Lin:
    """A quantity that is a linear combination of tape node values whose
    coefficients may themselves depend on theta."""

    tape: "EvalTape"
    coefs: dict  # node index -> coefficient value
    dcoefs: dict = field(default_factory=dict)  # node index -> {theta idx: d coef}

    def value(self) -> float:
        nodes = self.tape.nodes
        return float(sum(c * nodes[i].value for i, c in self.coefs.items()))

    def accumulate(self, weight: float):
        """Push d(loss)/d(this quantity) onto node weights and onto the
        coefficient-sensitivity part of the theta gradient."""
        nodes = self.tape.nodes
        for i, c in self.coefs.items():
            nodes[i].weight += weight * c
        extra = self.tape.theta_extra
        for i, dmap in self.dcoefs.items():
            v = nodes[i].value
            for t, dc in dmap.items():
                extra[t] += weight * dc * v


class EvalTape:
    def __init__(self, net, theta=None, s=DEFAULT_SHIFT, counter=None):
        _check_shift(s)
        self.net = net
        self.theta = net.theta if theta is None else theta
        self.s = s
        self.counter = counter
        self.nodes: list[EvalNode] = []
        self.theta_extra = np.zeros(net.n_theta)
        self._deps = _sites_by_coordinate(net, self.theta)

    def sites_for(self, i):
        return self._deps[i]

    def _node(self, x, shifts) -> int:
        val = _eval(self.net, self.theta, x, shifts, self.counter)
        self.nodes.append(EvalNode(np.asarray(x, dtype=float), shifts, val))
        return len(self.nodes) - 1

    def value(self, x) -> Lin:
        return Lin(self, {self._node(x, {}): 1.0})

    def first(self, x, gate_id) -> Lin:
        w = 1.0 / (2 * np.sin(self.s))
        ip = self._node(x, {gate_id: +self.s})
        im = self._node(x, {gate_id: -self.s})
        return Lin(self, {ip: w, im: -w})

    def second_same(self, x, gate_id):
        """Three-point rule: (second derivative, free first derivative)."""
        ip = self._node(x, {gate_id: +np.pi / 2})
        i0 = self._node(x, {})
        im = self._node(x, {gate_id: -np.pi / 2})
        return (Lin(self, {ip: 0.5, i0: -1.0, im: 0.5}),
                Lin(self, {ip: 0.5, im: -0.5}))

    def mixed(self, x, gate_id_a, gate_id_b) -> Lin:
        w = 1.0 / (4 * np.sin(self.s) ** 2)
        ipp = self._node(x, {gate_id_a: +self.s, gate_id_b: +self.s})
        ipm = self._node(x, {gate_id_a: +self.s, gate_id_b: -self.s})
        imp = self._node(x, {gate_id_a: -self.s, gate_id_b: +self.s})
        imm = self._node(x, {gate_id_a: -self.s, gate_id_b: -self.s})
        return Lin(self, {ipp: w, ipm: -w, imp: -w, imm: w})


def _lin_sum(tape, parts):
    """Combine (Lin, scale) parts; scales may be plain floats or Coefs."""
    coefs, dcoefs = {}, {}
    for lin, scale in parts:
        if isinstance(scale, Coef):
            sval, sd = scale.value, scale.dtheta
        else:
            sval, sd = scale, None
        for i, c in lin.coefs.items():
            coefs[i] = coefs.get(i, 0.0) + sval * c
            if sd:
                dd = dcoefs.setdefault(i, {})
                for t, dv in sd.items():
                    dd[t] = dd.get(t, 0.0) + dv * c
        for i, dmap in lin.dcoefs.items():
            dd = dcoefs.setdefault(i, {})
            for t, dv in dmap.items():
                dd[t] = dd.get(t, 0.0) + sval * dv
    return Lin(tape, coefs, dcoefs)


def gradient_quantities(tape: EvalTape, x, coords) -> list[Lin]:
    """First derivatives of u along `coords`, two evaluations per site."""
    theta = tape.theta
    out = []
    for i in coords:
        parts = [(tape.first(x, site.gate_id), _coef_of(site, x, theta, i))
                 for site in tape.sites_for(i)]
        out.append(_lin_sum(tape, parts))
    return out


def laplacian_quantities(tape: EvalTape, x, coords) -> Lin:
    """Sum of unmixed second derivatives over `coords`.

    Per coordinate: mixed rule over ordered distinct site pairs plus the
    three-point rule per site, whose free first derivative supplies the
    second-order chain term. 4*alpha_i^2 - alpha_i evaluations."""
    theta = tape.theta
    parts = []
    for i in coords:
        sites = tape.sites_for(i)
        for a in sites:
            for b in sites:
                if a.gate_id == b.gate_id:
                    continue
                parts.append((tape.mixed(x, a.gate_id, b.gate_id),
                              _coef_mul(_coef_of(a, x, theta, i),
                                        _coef_of(b, x, theta, i))))
        for a in sites:
            gaa, ga = tape.second_same(x, a.gate_id)
            pa = _coef_of(a, x, theta, i)
            parts.append((gaa, _coef_mul(pa, pa)))
            parts.append((ga, a.partial2(x, theta, i, i)))
    return _lin_sum(tape, parts)


def hessian_quantities(tape: EvalTape, x):
    """Upper-triangle Hessian entries plus the gradient harvested for free
    from the same-site three-point evaluations of the diagonal entries."""
    theta = tape.theta
    d = tape.net.d_in
    hess = {}
    grad_parts = {i: [] for i in range(d)}
    for i in range(d):
        for j in range(i, d):
            sites_i, sites_j = tape.sites_for(i), tape.sites_for(j)
            parts = []
            for a in sites_i:
                for b in sites_j:
                    if a.gate_id == b.gate_id:
                        continue
                    parts.append((tape.mixed(x, a.gate_id, b.gate_id),
                                  _coef_mul(_coef_of(a, x, theta, i),
                                            _coef_of(b, x, theta, j))))
            for a in sites_i:
                if a not in sites_j:
                    continue
                gaa, ga = tape.second_same(x, a.gate_id)
                parts.append((gaa, _coef_mul(_coef_of(a, x, theta, i),
                                             _coef_of(a, x, theta, j))))
                parts.append((ga, a.partial2(x, theta, i, j)))
                if i == j:
                    grad_parts[i].append((ga, _coef_of(a, x, theta, i)))
            hess[(i, j)] = _lin_sum(tape, parts)
    grad = [_lin_sum(tape, grad_parts[i]) for i in range(d)]
    return hess, grad


def hjb_quantities(tape: EvalTape, x):
    """Time derivative, spatial gradient, and spatial Laplacian.

    The spatial part derives the gradient from the same-site three-point
    evaluations and then, for every ordered mixed site pair, spends four
    evaluations on the mixed term plus two on a companion first derivative
    that is not cached from the earlier pass; 2*alpha_t + 3*alpha_i*(2*alpha_i
    - 1) evaluations in total."""
    theta = tape.theta
    d_in = tape.net.d_in
    dt_parts = [(tape.first(x, site.gate_id), _coef_of(site, x, theta, 0))
                for site in tape.sites_for(0)]
    grad = []
    lap_parts = []
    for i in range(1, d_in):
        sites = tape.sites_for(i)
        gparts = []
        for a in sites:
            gaa, ga = tape.second_same(x, a.gate_id)
            pa = _coef_of(a, x, theta, i)
            lap_parts.append((gaa, _coef_mul(pa, pa)))
            lap_parts.append((ga, a.partial2(x, theta, i, i)))
            gparts.append((ga, pa))
        for a in sites:
            for b in sites:
                if a.gate_id == b.gate_id:
                    continue
                lap_parts.append((tape.mixed(x, a.gate_id, b.gate_id),
                                  _coef_mul(_coef_of(a, x, theta, i),
                                            _coef_of(b, x, theta, i))))
                _ = tape.first(x, a.gate_id)
        grad.append(_lin_sum(tape, gparts))
    return _lin_sum(tape, dt_parts), grad, _lin_sum(tape, lap_parts)


def theta_gradient(net, tape: EvalTape, s=DEFAULT_SHIFT, counter=None):
    """Loss gradient with respect to every trainable parameter.

    Each tape node carries d(loss)/d(node value); each theta component is a
    rotation angle scaled by 2 (phi, alpha) or 2*x_i (gamma_i), so two shifted
    evaluations per (theta component, node) finish the chain rule; the tape's
    coefficient-sensitivity accumulator supplies the remaining term (the
    x-slopes of trainable angles appear inside chain coefficients) from node
    values already on the tape. The evaluation count is exactly
    2 * N_theta * len(tape.nodes)."""
    _check_shift(s)
    theta = tape.theta
    denom = 2 * np.sin(s)
    grad = tape.theta_extra.copy()
    for k, (gate_id, kind, coord) in enumerate(net.theta_site_map()):
        for node in tape.nodes:
            sp = dict(node.shifts)
            sp[gate_id] = sp.get(gate_id, 0.0) + s
            sm = dict(node.shifts)
            sm[gate_id] = sm.get(gate_id, 0.0) - s
            dv = (_eval(net, theta, node.x, sp, counter)
                  - _eval(net, theta, node.x, sm, counter)) / denom
            chain = 2.0 if kind in ("phi", "alpha") else 2.0 * node.x[coord]
            grad[k] += node.weight * chain * dv
    return grad


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


def finite_difference_gradient(f, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    g = np.zeros(len(x))
    for i in range(len(x)):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def finite_difference_hessian(f, x, h=1e-4):
    x = np.asarray(x, dtype=float)
    d = len(x)
    H = np.zeros((d, d))
    f0 = f(x)
    for i in range(d):
        for j in range(i, d):
            if i == j:
                xp, xm = x.copy(), x.copy()
                xp[i] += h
                xm[i] -= h
                H[i, i] = (f(xp) - 2 * f0 + f(xm)) / h**2
            else:
                xpp = x.copy(); xpp[[i, j]] += h
                xmm = x.copy(); xmm[[i, j]] -= h
                xpm = x.copy(); xpm[i] += h; xpm[j] -= h
                xmp = x.copy(); xmp[i] -= h; xmp[j] += h
                H[i, j] = H[j, i] = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4 * h**2)
    return H


def random_involutory_hermitian(dim, rng):
    """G = V diag(+-1) V^dag: Hermitian with G^2 = I."""
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    q = q * (np.diagonal(r) / np.abs(np.diagonal(r)))
    signs = rng.choice([-1.0, 1.0], size=dim)
    return (q * signs) @ q.conj().T


def sinusoidal_coefficients(psi, G, C):
    """Coefficients (a, b, c) with <psi| M(x)^dag C M(x) |psi> =
    a + b cos x + c sin x for the rotation-like M(x) generated by G."""
    A = (G.conj().T @ C @ G + C) / 2
    B = (C - G.conj().T @ C @ G) / 2
    Ct = 0.5j * (G.conj().T @ C - C @ G)
    return tuple(float(np.vdot(psi, M @ psi).real) for M in (A, B, Ct))


def rotation_like_expectation(psi, G, C, x):
    M = np.cos(x / 2) * np.eye(len(psi)) - 1j * np.sin(x / 2) * G
    phi = M @ psi
    return float(np.vdot(phi, C @ phi).real)
