//! Dense kernels for periodic 1D convolution over `[channels, n]` buffers.
//!
//! The convolution is a cross-correlation with a centred kernel:
//! `out[o, i] = b[o] + Σ_c Σ_t w[o, c, t] · x[c, (i + t − k/2) mod n]`.

fn pad_periodic(x: &[f64], channels: usize, n: usize, kernel: usize) -> Vec<f64> {
    let half = kernel / 2;
    let np = n + kernel - 1;
    let mut xp = vec![0.0; channels * np];
    for c in 0..channels {
        let src = &x[c * n..(c + 1) * n];
        let dst = &mut xp[c * np..(c + 1) * np];
        for (j, d) in dst.iter_mut().enumerate() {
            *d = src[(j + n - half) % n];
        }
    }
    xp
}

pub fn conv_forward(
    x: &[f64],
    cin: usize,
    n: usize,
    w: &[f64],
    cout: usize,
    kernel: usize,
    bias: Option<&[f64]>,
) -> Vec<f64> {
    let np = n + kernel - 1;
    let xp = pad_periodic(x, cin, n, kernel);
    let mut out = vec![0.0; cout * n];
    for o in 0..cout {
        let row = &mut out[o * n..(o + 1) * n];
        if let Some(b) = bias {
            row.fill(b[o]);
        }
        for c in 0..cin {
            let base = c * np;
            for t in 0..kernel {
                let wv = w[(o * cin + c) * kernel + t];
                if wv == 0.0 {
                    continue;
                }
                let src = &xp[base + t..base + t + n];
                for (r, s) in row.iter_mut().zip(src) {
                    *r += wv * s;
                }
            }
        }
    }
    out
}

/// Adjoint of the bias-free convolution with respect to its input: `Aᵀ g`.
pub fn conv_input_adjoint(
    g: &[f64],
    cout: usize,
    n: usize,
    w: &[f64],
    cin: usize,
    kernel: usize,
) -> Vec<f64> {
    let half = kernel / 2;
    let np = n + kernel - 1;
    let mut gp = vec![0.0; cin * np];
    for o in 0..cout {
        let grow = &g[o * n..(o + 1) * n];
        for c in 0..cin {
            let base = c * np;
            for t in 0..kernel {
                let wv = w[(o * cin + c) * kernel + t];
                if wv == 0.0 {
                    continue;
                }
                let dst = &mut gp[base + t..base + t + n];
                for (d, s) in dst.iter_mut().zip(grow) {
                    *d += wv * s;
                }
            }
        }
    }
    let mut gx = vec![0.0; cin * n];
    for c in 0..cin {
        for j in 0..np {
            gx[c * n + (j + n - half) % n] += gp[c * np + j];
        }
    }
    gx
}

/// Gradient of `Σ g · conv(x, w)` with respect to the weights.
pub fn conv_weight_grad(
    g: &[f64],
    cout: usize,
    n: usize,
    x: &[f64],
    cin: usize,
    kernel: usize,
) -> Vec<f64> {
    let np = n + kernel - 1;
    let xp = pad_periodic(x, cin, n, kernel);
    let mut gw = vec![0.0; cout * cin * kernel];
    for o in 0..cout {
        let grow = &g[o * n..(o + 1) * n];
        for c in 0..cin {
            let base = c * np;
            for t in 0..kernel {
                gw[(o * cin + c) * kernel + t] = dot(grow, &xp[base + t..base + t + n]);
            }
        }
    }
    gw
}

pub fn conv_bias_grad(g: &[f64], cout: usize, n: usize) -> Vec<f64> {
    (0..cout).map(|o| g[o * n..(o + 1) * n].iter().sum()).collect()
}

/// Dot product with four fixed-order partial sums.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in 4 * chunks..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// SiLU `x · σ(x)` and its first two derivatives.
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn silu_d1(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

pub fn silu_d2(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
