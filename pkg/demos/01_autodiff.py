"""Taped reverse-mode gradients on numpy arrays, checked against finite differences."""

import numpy as np

from testembed import numcore as nc
from testembed.gradcheck import check_gradients

# parameters are trainable leaves; everything else is a constant
w = nc.parameter(np.array([[1.0, -2.0], [0.5, 3.0]]))
x = nc.Tensor(np.array([[1.0], [2.0]]))
loss = nc.tsum(nc.gelu(nc.matmul(w, x)) ** 2)
grads = nc.backward(loss)
print("loss", float(loss.data))
print("dL/dw\n", grads[w])

# causal conv: the output at t sees only x[:t+1]
sig = nc.Tensor([[1.0, 1.0, 1.0, 1.0]])
print("dilated sum", nc.conv1d_causal(sig, nc.Tensor([[[1.0, 1.0]]]), dilation=2).data)

# the same loss against central differences, in float64
err = check_gradients(lambda p: nc.tsum(nc.gelu(nc.matmul(p[0], p[1])) ** 2),
                      [w.data.astype(np.float64), x.data.astype(np.float64)])
print("relative error vs finite differences: %.2e" % err)
