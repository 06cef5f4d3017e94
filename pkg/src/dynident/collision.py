"""End-effector feature points and ellipsoidal self-collision residuals.

The end-effector (EE) geometry enters as a point cloud in the EE frame. It
is reduced to main feature points in two steps: convex hull (only extreme
points can touch anything first) and a Gaussian mixture fit whose means
become the representative points. Collision checking then evaluates, per
robot link, the quadric

    g = x^T A x - 1,   A = diag(eps_x^-2, eps_y^-2, eps_z^-2)

with ``x`` the feature point in the link frame minus the ellipsoid center.
``g < 0`` means the point is inside the safety ellipsoid; feasibility asks
for ``g >= margin`` with a default margin of 0.05 so the ellipsoids act as
inflated link shapes.

Mixture-order selection uses BIC over K = 1..k_max: pure log-likelihood is
monotone in K and cannot select anything, while BIC keeps the point count
small, which is the point of the reduction.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np
import scipy.spatial
from scipy.special import logsumexp

from .chain import KinematicChain, batch_link_frames, link_frames

logger = logging.getLogger(__name__)

DEFAULT_MARGIN = 0.05
DEFAULT_K_MAX = 8
COV_REGULARIZATION = 1e-8  # m^2, added to covariance diagonals each M step


def read_point_cloud(path) -> np.ndarray:
    """CSV with header ``x,y,z``, meters, one point per row -> (N, 3)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    if [h.strip() for h in header] != ["x", "y", "z"]:
        raise ValueError(f"{path}: expected header x,y,z")
    pts = np.atleast_2d(np.genfromtxt(path, delimiter=",", skip_header=1))
    if pts.shape[1] != 3 or not np.all(np.isfinite(pts)):
        raise ValueError(f"{path}: malformed point cloud")
    return pts


def write_point_cloud(points: np.ndarray, path) -> None:
    points = np.asarray(points, dtype=float)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x,y,z\n")
        for p in points:
            fh.write(f"{p[0]:.9g},{p[1]:.9g},{p[2]:.9g}\n")


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Extreme points of the cloud, ascending input order. N >= 4 required."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError("point cloud must be (N, 3)")
    if not np.all(np.isfinite(points)):
        raise ValueError("point cloud contains non-finite coordinates")
    if len(points) < 4:
        raise ValueError("need at least 4 points for a 3-d hull")
    try:
        hull = scipy.spatial.ConvexHull(points)
    except scipy.spatial.QhullError as exc:
        raise ValueError(f"degenerate point cloud (coplanar/collinear): {exc}") \
            from None
    return points[np.sort(hull.vertices)]


@dataclass(frozen=True)
class Mfpee:
    """Main feature points: mixture means with their covariances/weights."""

    mu: np.ndarray     # (K, 3)
    sigma: np.ndarray  # (K, 3, 3)
    pi: np.ndarray     # (K,)

    def __post_init__(self):
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float))
        object.__setattr__(self, "sigma", np.asarray(self.sigma, dtype=float))
        object.__setattr__(self, "pi", np.asarray(self.pi, dtype=float))
        k = self.mu.shape[0]
        if self.mu.shape != (k, 3) or self.sigma.shape != (k, 3, 3) \
                or self.pi.shape != (k,):
            raise ValueError("inconsistent mixture shapes")
        if np.any(self.pi <= 0) or abs(self.pi.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must be positive and sum to 1")

    @property
    def n_points(self) -> int:
        return self.mu.shape[0]


def _log_gauss(points, mu, sigma):
    """Log N(points | mu, sigma) for one component; (N,) output."""
    chol = np.linalg.cholesky(sigma)
    diff = points - mu
    sol = np.linalg.solve(chol, diff.T)
    maha = np.sum(sol ** 2, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (maha + logdet + 3.0 * np.log(2.0 * np.pi))


def _seed_means(points, k, rng):
    """Greedy spread seeding: sample proportional to squared distance."""
    n = len(points)
    means = [points[rng.integers(n)]]
    for _ in range(k - 1):
        d2 = np.min(
            [np.sum((points - m) ** 2, axis=1) for m in means], axis=0)
        total = d2.sum()
        if total <= 0:
            means.append(points[rng.integers(n)])
            continue
        means.append(points[rng.choice(n, p=d2 / total)])
    return np.array(means)


def em_gaussian_mixture(points, k, rng, n_iter=200, tol=1e-10):
    """Full-covariance EM. Returns (mu, sigma, pi, loglik_trace).

    The trace is non-decreasing up to roundoff; covariance diagonals are
    regularized so coincident points never make a component singular.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= number of points")
    mu = _seed_means(points, k, rng)
    base = np.cov(points.T) if n > 1 else np.zeros((3, 3))
    sigma = np.repeat((base + 1e-6 * np.eye(3))[None], k, axis=0)
    pi = np.full(k, 1.0 / k)

    trace = []
    for _ in range(n_iter):
        log_p = np.stack([np.log(pi[j]) + _log_gauss(points, mu[j], sigma[j])
                          for j in range(k)], axis=1)     # (N, K)
        norm = logsumexp(log_p, axis=1)
        trace.append(float(np.sum(norm)))
        resp = np.exp(log_p - norm[:, None])

        nk = resp.sum(axis=0)
        for j in range(k):
            if nk[j] < 1e-12 * n:
                # dead component: restart it on the worst-covered point
                worst = int(np.argmin(norm))
                mu[j] = points[worst]
                sigma[j] = base + 1e-6 * np.eye(3)
                nk[j] = 1.0
                resp[:, j] = 0.0
                resp[worst, j] = 1.0
                logger.debug("re-seeded dead mixture component %d", j)
                continue
            mu[j] = resp[:, j] @ points / nk[j]
            diff = points - mu[j]
            sigma[j] = (resp[:, j, None] * diff).T @ diff / nk[j] \
                + COV_REGULARIZATION * np.eye(3)
        pi = nk / nk.sum()

        if len(trace) > 1 and trace[-1] - trace[-2] < tol * max(1.0, abs(trace[-1])):
            break
    return mu, sigma, pi, np.array(trace)


def fit_mfpee(points, k_max: int = DEFAULT_K_MAX, seed=0,
              n_restarts: int = 3) -> Mfpee:
    """Fit mixtures for K = 1..k_max and keep the best-BIC model."""
    points = np.asarray(points, dtype=float)
    if len(points) == 0:
        raise ValueError("empty point set")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    master = np.random.default_rng(seed)
    n = len(points)
    best = None
    for k in range(1, min(k_max, n) + 1):
        for _ in range(n_restarts):
            rng = np.random.default_rng(master.integers(2 ** 63))
            mu, sigma, pi, trace = em_gaussian_mixture(points, k, rng)
            n_free = (k - 1) + 3 * k + 6 * k
            bic = -2.0 * trace[-1] + n_free * np.log(n)
            if best is None or bic < best[0]:
                best = (bic, mu, sigma, pi)
    _, mu, sigma, pi = best
    return Mfpee(mu=mu, sigma=sigma, pi=pi)


@dataclass(frozen=True)
class LinkEllipsoid:
    """Safety ellipsoid rigidly attached to a link frame (0-based index)."""

    link_index: int
    center_offset: np.ndarray  # (3,) m, in link frame
    eps: np.ndarray            # (3,) semi-axes, m

    def __post_init__(self):
        object.__setattr__(self, "center_offset",
                           np.asarray(self.center_offset, dtype=float))
        object.__setattr__(self, "eps", np.asarray(self.eps, dtype=float))
        if self.center_offset.shape != (3,) or self.eps.shape != (3,):
            raise ValueError("center_offset and eps must be 3-vectors")
        if np.any(self.eps <= 0):
            raise ValueError("ellipsoid semi-axes must be positive")

    @property
    def a_diag(self) -> np.ndarray:
        """Diagonal of A = diag(eps^-2); derived, never stored."""
        return self.eps ** -2.0


def _check_collision_setup(chain, ellipsoids, ee_link):
    ee = ee_link % chain.dof if -chain.dof <= ee_link < chain.dof else None
    if ee is None:
        raise ValueError(f"ee_link {ee_link} out of range for dof {chain.dof}")
    for e in ellipsoids:
        if not 0 <= e.link_index < chain.dof:
            raise ValueError(f"ellipsoid link index {e.link_index} out of range")
        if e.link_index == ee:
            raise ValueError("ellipsoid on the end-effector's own link: "
                             "self-test is meaningless")
    return ee


def collision_residuals(chain: KinematicChain, q, mfpee: Mfpee,
                        ellipsoids, ee_link: int = -1) -> np.ndarray:
    """Residual vector g, ellipsoid-major, length len(ellipsoids)*K."""
    ee = _check_collision_setup(chain, ellipsoids, ee_link)
    frames = link_frames(chain, q)
    t_ee = frames[ee]
    world = mfpee.mu @ t_ee[:3, :3].T + t_ee[:3, 3]
    out = np.empty(len(ellipsoids) * mfpee.n_points)
    for i, e in enumerate(ellipsoids):
        t_l = frames[e.link_index]
        local = (world - t_l[:3, 3]) @ t_l[:3, :3] - e.center_offset
        out[i * mfpee.n_points:(i + 1) * mfpee.n_points] = \
            (local ** 2) @ e.a_diag - 1.0
    return out


def collision_residuals_batch(chain: KinematicChain, q_batch, mfpee: Mfpee,
                              ellipsoids, ee_link: int = -1) -> np.ndarray:
    """Vectorized over configurations: (B, len(ellipsoids)*K)."""
    ee = _check_collision_setup(chain, ellipsoids, ee_link)
    rot, pos = batch_link_frames(chain, q_batch)
    b = rot.shape[0]
    world = np.einsum("bij,kj->bki", rot[:, ee], mfpee.mu) + pos[:, ee, None, :]
    out = np.empty((b, len(ellipsoids) * mfpee.n_points))
    for i, e in enumerate(ellipsoids):
        rel = world - pos[:, e.link_index, None, :]
        local = np.einsum("bkj,bji->bki", rel, rot[:, e.link_index]) \
            - e.center_offset
        out[:, i * mfpee.n_points:(i + 1) * mfpee.n_points] = \
            (local ** 2) @ e.a_diag - 1.0
    return out


def mfpee_to_dict(m: Mfpee) -> dict:
    return {"mu": m.mu.tolist(), "sigma": m.sigma.tolist(),
            "pi": m.pi.tolist()}


def mfpee_from_dict(data: dict) -> Mfpee:
    return Mfpee(mu=np.array(data["mu"], dtype=float),
                 sigma=np.array(data["sigma"], dtype=float),
                 pi=np.array(data["pi"], dtype=float))


def mfpee_to_json(m: Mfpee) -> str:
    return json.dumps(mfpee_to_dict(m), indent=2)


def mfpee_from_json(text: str) -> Mfpee:
    return mfpee_from_dict(json.loads(text))


def ellipsoids_from_config(items) -> list:
    """[{link, center: [3], eps: [3]}, ...] -> list of LinkEllipsoid."""
    out = []
    for item in items:
        out.append(LinkEllipsoid(link_index=int(item["link"]),
                                 center_offset=item["center"],
                                 eps=item["eps"]))
    return out


def ellipsoids_to_config(ellipsoids) -> list:
    return [{"link": e.link_index, "center": e.center_offset.tolist(),
             "eps": e.eps.tolist()} for e in ellipsoids]
