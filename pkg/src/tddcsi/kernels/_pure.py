"""numpy implementations of the compiled kernels, same operation order."""
import numpy as np


def adam_update(param, grad, m, v, step, beta1, beta2, eps):
    dt = param.dtype.type
    m *= dt(beta1)
    m += dt(1.0 - beta1) * grad
    v *= dt(beta2)
    v += dt(1.0 - beta2) * (grad * grad)
    param -= (dt(step) * m) / (np.sqrt(v) + dt(eps))


def tanh_backward(act, delta):
    delta *= 1 - act * act


def sigmoid_backward(act, delta):
    delta *= act
    delta *= 1 - act


def interp_linear(re, im, seg, frac):
    lo_re, hi_re = re[:, seg], re[:, seg + 1]
    lo_im, hi_im = im[:, seg], im[:, seg + 1]
    return lo_re + (hi_re - lo_re) * frac, lo_im + (hi_im - lo_im) * frac
