"""The differentiation engine and the Gaussian head.

Gradients come off a reverse-mode tape and are checked here against central
finite differences; the covariance head turns 6 unconstrained numbers into a
valid SPD covariance by construction, and the negative log-likelihood is
evaluated through triangular solves.

Run: python3 demos/03_autodiff_and_heads.py
"""

import numpy as np

from gustuq import autodiff as ad
from gustuq.gaussian import GaussianPrediction, assemble_cholesky, nll_loss

# gradient of a tiny two-layer function vs finite differences
w1 = np.array([[0.4, -0.7, 0.1], [0.2, 0.9, -0.3]])
w2 = np.array([[0.8, -0.5]])
x = np.array([[0.3, -0.2, 0.5]])

def f(v):
    h = ad.tanh(ad.matmul(v, ad.transpose(w1)))
    return ad.mean_all(ad.mul(ad.matmul(h, ad.transpose(w2)),
                              ad.matmul(h, ad.transpose(w2))))

grad = ad.gradient(f, x)
h_step = 1e-6
fd = np.zeros(3)
for i in range(3):
    xp, xm = x.copy(), x.copy()
    xp[0, i] += h_step
    xm[0, i] -= h_step

    def plain(a):
        hh = np.tanh(a @ w1.T)
        return float(np.mean((hh @ w2.T) ** 2))

    fd[i] = (plain(xp) - plain(xm)) / (2 * h_step)
print("autodiff gradient:", np.round(grad.ravel(), 8))
print("finite differences:", np.round(fd, 8))
print(f"relative error: {np.linalg.norm(grad.ravel() - fd) / np.linalg.norm(fd):.2e}")

# Jacobian of a linear map is the matrix itself
a = np.array([[1.0, 2.0, 0.0], [0.0, -1.0, 3.0]])
jac = ad.jacobian(lambda v: ad.matmul(v, ad.transpose(a)), np.zeros((1, 3)))
print("\nJacobian of x -> Ax:\n", jac)

# the covariance head: raw numbers in, SPD covariance out
raw = np.array([np.log(4.0), 0.3, 0.0, -0.2, 0.5, -1.0])
L = assemble_cholesky(raw)
cov = L @ L.T
print("\nassembled L (diag exp(raw/2)):\n", np.round(L, 4))
print("eigenvalues of L L^T:", np.round(np.linalg.eigvalsh(cov), 4))

pred = GaussianPrediction.from_raw(np.concatenate([[0.1, -0.2, 0.5], raw]))
y = np.array([0.0, 0.0, 0.4])
print(f"\nNLL at y={y}: {nll_loss(y, pred.mean, pred.L):.6f}")
print(f"NLL of standard normal at its mean (l=3): "
      f"{nll_loss(np.zeros(3), np.zeros(3), np.eye(3)):.6f} = 1.5 log(2 pi)")
