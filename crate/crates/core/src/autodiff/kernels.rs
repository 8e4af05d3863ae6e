//! Forward and backward kernels for the spatial operations.
//!
//! Everything here works on raw row-major buffers with explicit extents; the
//! tape in the parent module handles validation and bookkeeping.

/// Extents of a 4-d image batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.batch * self.channels * self.plane()
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.batch, self.channels, self.height, self.width]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl ConvGeometry {
    pub fn output_extent(&self, input: usize) -> Option<usize> {
        let span = self.dilation * (self.kernel - 1) + 1;
        let padded = input + 2 * self.padding;
        (padded >= span).then(|| (padded - span) / self.stride + 1)
    }
}

/// Range of output positions `o` for which `o*stride + offset - padding` lands
/// inside `[0, input)`.
#[inline]
fn valid_range(
    offset: usize,
    padding: usize,
    stride: usize,
    input: usize,
    output: usize,
) -> (usize, usize) {
    // lo = ceil((padding - offset) / stride) when padding > offset
    let lo = if padding > offset {
        (padding - offset).div_ceil(stride)
    } else {
        0
    };
    // hi = floor((input - 1 + padding - offset) / stride) + 1
    let top = input + padding;
    let hi = if top > offset {
        ((top - 1 - offset) / stride + 1).min(output)
    } else {
        0
    };
    (lo, hi.max(lo))
}

pub fn conv2d_forward(
    x: &[f64],
    xd: Dims,
    w: &[f64],
    bias: Option<&[f64]>,
    out_channels: usize,
    g: ConvGeometry,
    yd: Dims,
) -> Vec<f64> {
    let k = g.kernel;
    let mut y = vec![0.0; yd.len()];
    for b in 0..xd.batch {
        for co in 0..out_channels {
            let out = &mut y[(b * out_channels + co) * yd.plane()..][..yd.plane()];
            if let Some(bias) = bias {
                out.iter_mut().for_each(|v| *v = bias[co]);
            }
            for ci in 0..xd.channels {
                let inp = &x[(b * xd.channels + ci) * xd.plane()..][..xd.plane()];
                let wk = &w[(co * xd.channels + ci) * k * k..][..k * k];
                for ky in 0..k {
                    let (oy0, oy1) =
                        valid_range(ky * g.dilation, g.padding, g.stride, xd.height, yd.height);
                    for kx in 0..k {
                        let wv = wk[ky * k + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        let (ox0, ox1) =
                            valid_range(kx * g.dilation, g.padding, g.stride, xd.width, yd.width);
                        for oy in oy0..oy1 {
                            let iy = oy * g.stride + ky * g.dilation - g.padding;
                            let row = &inp[iy * xd.width..][..xd.width];
                            let orow = &mut out[oy * yd.width..][..yd.width];
                            for ox in ox0..ox1 {
                                let ix = ox * g.stride + kx * g.dilation - g.padding;
                                orow[ox] += wv * row[ix];
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

/// Gradient of conv2d with respect to its input.
pub fn conv2d_backward_input(
    gy: &[f64],
    yd: Dims,
    w: &[f64],
    g: ConvGeometry,
    xd: Dims,
) -> Vec<f64> {
    let k = g.kernel;
    let mut gx = vec![0.0; xd.len()];
    for b in 0..xd.batch {
        for co in 0..yd.channels {
            let go = &gy[(b * yd.channels + co) * yd.plane()..][..yd.plane()];
            for ci in 0..xd.channels {
                let gi = &mut gx[(b * xd.channels + ci) * xd.plane()..][..xd.plane()];
                let wk = &w[(co * xd.channels + ci) * k * k..][..k * k];
                for ky in 0..k {
                    let (oy0, oy1) =
                        valid_range(ky * g.dilation, g.padding, g.stride, xd.height, yd.height);
                    for kx in 0..k {
                        let wv = wk[ky * k + kx];
                        let (ox0, ox1) =
                            valid_range(kx * g.dilation, g.padding, g.stride, xd.width, yd.width);
                        for oy in oy0..oy1 {
                            let iy = oy * g.stride + ky * g.dilation - g.padding;
                            let grow = &go[oy * yd.width..][..yd.width];
                            let irow = &mut gi[iy * xd.width..][..xd.width];
                            for ox in ox0..ox1 {
                                let ix = ox * g.stride + kx * g.dilation - g.padding;
                                irow[ix] += wv * grow[ox];
                            }
                        }
                    }
                }
            }
        }
    }
    gx
}

/// Gradient of conv2d with respect to its weight `[Cout, Cin, k, k]`.
pub fn conv2d_backward_weight(
    gy: &[f64],
    yd: Dims,
    x: &[f64],
    xd: Dims,
    g: ConvGeometry,
) -> Vec<f64> {
    let k = g.kernel;
    let mut gw = vec![0.0; yd.channels * xd.channels * k * k];
    for b in 0..xd.batch {
        for co in 0..yd.channels {
            let go = &gy[(b * yd.channels + co) * yd.plane()..][..yd.plane()];
            for ci in 0..xd.channels {
                let inp = &x[(b * xd.channels + ci) * xd.plane()..][..xd.plane()];
                let gk = &mut gw[(co * xd.channels + ci) * k * k..][..k * k];
                for ky in 0..k {
                    let (oy0, oy1) =
                        valid_range(ky * g.dilation, g.padding, g.stride, xd.height, yd.height);
                    for kx in 0..k {
                        let (ox0, ox1) =
                            valid_range(kx * g.dilation, g.padding, g.stride, xd.width, yd.width);
                        let mut acc = 0.0;
                        for oy in oy0..oy1 {
                            let iy = oy * g.stride + ky * g.dilation - g.padding;
                            let grow = &go[oy * yd.width..][..yd.width];
                            let irow = &inp[iy * xd.width..][..xd.width];
                            for ox in ox0..ox1 {
                                let ix = ox * g.stride + kx * g.dilation - g.padding;
                                acc += grow[ox] * irow[ix];
                            }
                        }
                        gk[ky * k + kx] += acc;
                    }
                }
            }
        }
    }
    gw
}

/// Per-channel sum of an upstream gradient (bias gradient).
pub fn channel_sums(gy: &[f64], yd: Dims) -> Vec<f64> {
    let mut gb = vec![0.0; yd.channels];
    for b in 0..yd.batch {
        for (c, acc) in gb.iter_mut().enumerate() {
            *acc += gy[(b * yd.channels + c) * yd.plane()..][..yd.plane()]
                .iter()
                .sum::<f64>();
        }
    }
    gb
}

/// Transposed convolution with weight `[Cin, Cout, k, k]`. This is the
/// adjoint of [`conv2d_forward`] with the same stride and padding, plus bias.
pub fn conv_transpose2d_forward(
    x: &[f64],
    xd: Dims,
    w: &[f64],
    bias: Option<&[f64]>,
    g: ConvGeometry,
    yd: Dims,
) -> Vec<f64> {
    let k = g.kernel;
    let mut y = vec![0.0; yd.len()];
    for b in 0..xd.batch {
        for co in 0..yd.channels {
            let out = &mut y[(b * yd.channels + co) * yd.plane()..][..yd.plane()];
            if let Some(bias) = bias {
                out.iter_mut().for_each(|v| *v = bias[co]);
            }
            for ci in 0..xd.channels {
                let inp = &x[(b * xd.channels + ci) * xd.plane()..][..xd.plane()];
                let wk = &w[(ci * yd.channels + co) * k * k..][..k * k];
                for ky in 0..k {
                    // input position iy scatters to oy = iy*s + ky - p; that is a
                    // conv2d gather from the output's point of view.
                    let (iy0, iy1) =
                        valid_range(ky * g.dilation, g.padding, g.stride, yd.height, xd.height);
                    for kx in 0..k {
                        let wv = wk[ky * k + kx];
                        let (ix0, ix1) =
                            valid_range(kx * g.dilation, g.padding, g.stride, yd.width, xd.width);
                        for iy in iy0..iy1 {
                            let oy = iy * g.stride + ky * g.dilation - g.padding;
                            let irow = &inp[iy * xd.width..][..xd.width];
                            let orow = &mut out[oy * yd.width..][..yd.width];
                            for ix in ix0..ix1 {
                                let ox = ix * g.stride + kx * g.dilation - g.padding;
                                orow[ox] += wv * irow[ix];
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

/// Gradient of the transposed convolution with respect to its weight.
pub fn conv_transpose2d_backward_weight(
    gy: &[f64],
    yd: Dims,
    x: &[f64],
    xd: Dims,
    g: ConvGeometry,
) -> Vec<f64> {
    // Same sums as the conv2d weight gradient with the roles of input and
    // upstream gradient exchanged: gw[ci,co] = sum x[ci] * gy[co](shifted).
    conv2d_backward_weight(x, xd, gy, yd, g)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Avg,
}

/// Returns pooled values and, for max mode, the flat input index chosen for
/// each output (first occurrence in row-major order on ties).
pub fn pool2d_forward(
    x: &[f64],
    xd: Dims,
    mode: PoolMode,
    window: usize,
    stride: usize,
    yd: Dims,
) -> (Vec<f64>, Vec<usize>) {
    let mut y = vec![0.0; yd.len()];
    let mut argmax = if mode == PoolMode::Max {
        vec![0; yd.len()]
    } else {
        Vec::new()
    };
    let inv = 1.0 / (window * window) as f64;
    for p in 0..xd.batch * xd.channels {
        let base = p * xd.plane();
        for oy in 0..yd.height {
            for ox in 0..yd.width {
                let o = p * yd.plane() + oy * yd.width + ox;
                match mode {
                    PoolMode::Max => {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = 0;
                        for wy in 0..window {
                            for wx in 0..window {
                                let idx = base + (oy * stride + wy) * xd.width + ox * stride + wx;
                                if x[idx] > best {
                                    best = x[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        y[o] = best;
                        argmax[o] = best_idx;
                    }
                    PoolMode::Avg => {
                        let mut acc = 0.0;
                        for wy in 0..window {
                            let row = base + (oy * stride + wy) * xd.width + ox * stride;
                            acc += x[row..row + window].iter().sum::<f64>();
                        }
                        y[o] = acc * inv;
                    }
                }
            }
        }
    }
    (y, argmax)
}

pub fn pool2d_backward(
    gy: &[f64],
    yd: Dims,
    xd: Dims,
    mode: PoolMode,
    window: usize,
    stride: usize,
    argmax: &[usize],
) -> Vec<f64> {
    let mut gx = vec![0.0; xd.len()];
    match mode {
        PoolMode::Max => {
            for (o, &idx) in argmax.iter().enumerate() {
                gx[idx] += gy[o];
            }
        }
        PoolMode::Avg => {
            let inv = 1.0 / (window * window) as f64;
            for p in 0..xd.batch * xd.channels {
                let base = p * xd.plane();
                for oy in 0..yd.height {
                    for ox in 0..yd.width {
                        let g = gy[p * yd.plane() + oy * yd.width + ox] * inv;
                        for wy in 0..window {
                            let row = base + (oy * stride + wy) * xd.width + ox * stride;
                            gx[row..row + window].iter_mut().for_each(|v| *v += g);
                        }
                    }
                }
            }
        }
    }
    gx
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InterpMode {
    Nearest,
    Bilinear,
}

/// One output coordinate's bilinear source: `(lower index, upper index, weight of upper)`.
fn bilinear_taps(input: usize, factor: usize) -> Vec<(usize, usize, f64)> {
    (0..input * factor)
        .map(|dst| {
            let src = ((dst as f64 + 0.5) / factor as f64 - 0.5).clamp(0.0, (input - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub fn interpolate_forward(x: &[f64], xd: Dims, factor: usize, mode: InterpMode) -> Vec<f64> {
    let (oh, ow) = (xd.height * factor, xd.width * factor);
    let mut y = vec![0.0; xd.batch * xd.channels * oh * ow];
    match mode {
        InterpMode::Nearest => {
            for p in 0..xd.batch * xd.channels {
                let inp = &x[p * xd.plane()..][..xd.plane()];
                let out = &mut y[p * oh * ow..][..oh * ow];
                for oy in 0..oh {
                    for ox in 0..ow {
                        out[oy * ow + ox] = inp[(oy / factor) * xd.width + ox / factor];
                    }
                }
            }
        }
        InterpMode::Bilinear => {
            let ty = bilinear_taps(xd.height, factor);
            let tx = bilinear_taps(xd.width, factor);
            for p in 0..xd.batch * xd.channels {
                let inp = &x[p * xd.plane()..][..xd.plane()];
                let out = &mut y[p * oh * ow..][..oh * ow];
                for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
                    for (ox, &(x0, x1, wx)) in tx.iter().enumerate() {
                        let top = inp[y0 * xd.width + x0] * (1.0 - wx) + inp[y0 * xd.width + x1] * wx;
                        let bot = inp[y1 * xd.width + x0] * (1.0 - wx) + inp[y1 * xd.width + x1] * wx;
                        out[oy * ow + ox] = top * (1.0 - wy) + bot * wy;
                    }
                }
            }
        }
    }
    y
}

pub fn interpolate_backward(gy: &[f64], xd: Dims, factor: usize, mode: InterpMode) -> Vec<f64> {
    let (oh, ow) = (xd.height * factor, xd.width * factor);
    let mut gx = vec![0.0; xd.len()];
    match mode {
        InterpMode::Nearest => {
            for p in 0..xd.batch * xd.channels {
                let go = &gy[p * oh * ow..][..oh * ow];
                let gi = &mut gx[p * xd.plane()..][..xd.plane()];
                for oy in 0..oh {
                    for ox in 0..ow {
                        gi[(oy / factor) * xd.width + ox / factor] += go[oy * ow + ox];
                    }
                }
            }
        }
        InterpMode::Bilinear => {
            let ty = bilinear_taps(xd.height, factor);
            let tx = bilinear_taps(xd.width, factor);
            for p in 0..xd.batch * xd.channels {
                let go = &gy[p * oh * ow..][..oh * ow];
                let gi = &mut gx[p * xd.plane()..][..xd.plane()];
                for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
                    for (ox, &(x0, x1, wx)) in tx.iter().enumerate() {
                        let g = go[oy * ow + ox];
                        gi[y0 * xd.width + x0] += g * (1.0 - wy) * (1.0 - wx);
                        gi[y0 * xd.width + x1] += g * (1.0 - wy) * wx;
                        gi[y1 * xd.width + x0] += g * wy * (1.0 - wx);
                        gi[y1 * xd.width + x1] += g * wy * wx;
                    }
                }
            }
        }
    }
    gx
}

/// Normalizes every `(batch, channel)` plane; returns the output and the
/// per-plane inverse standard deviation.
pub fn instance_norm_forward(x: &[f64], xd: Dims, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let n = xd.plane();
    let mut y = vec![0.0; x.len()];
    let mut inv_std = Vec::with_capacity(xd.batch * xd.channels);
    for (p, (inp, out)) in x.chunks_exact(n).zip(y.chunks_exact_mut(n)).enumerate() {
        let mean = inp.iter().sum::<f64>() / n as f64;
        let var = inp.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let s = 1.0 / (var + eps).sqrt();
        for (o, &v) in out.iter_mut().zip(inp) {
            *o = (v - mean) * s;
        }
        debug_assert_eq!(inv_std.len(), p);
        inv_std.push(s);
    }
    (y, inv_std)
}

pub fn instance_norm_backward(gy: &[f64], y: &[f64], inv_std: &[f64], plane: usize) -> Vec<f64> {
    let mut gx = vec![0.0; gy.len()];
    let n = plane as f64;
    for (p, ((g, yy), gi)) in gy
        .chunks_exact(plane)
        .zip(y.chunks_exact(plane))
        .zip(gx.chunks_exact_mut(plane))
        .enumerate()
    {
        let mean_g = g.iter().sum::<f64>() / n;
        let mean_gy = g.iter().zip(yy).map(|(a, b)| a * b).sum::<f64>() / n;
        for ((o, &gv), &yv) in gi.iter_mut().zip(g).zip(yy) {
            *o = inv_std[p] * (gv - mean_g - yv * mean_gy);
        }
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_range_matches_brute_force() {
        for input in 1..9 {
            for stride in 1..4 {
                for padding in 0..4 {
                    for offset in 0..7 {
                        let output = 12;
                        let (lo, hi) = valid_range(offset, padding, stride, input, output);
                        for o in 0..output {
                            let pos = (o * stride + offset) as isize - padding as isize;
                            let inside = pos >= 0 && (pos as usize) < input;
                            assert_eq!(inside, o >= lo && o < hi, "o={o} in={input} s={stride} p={padding} off={offset}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn bilinear_half_pixel_taps() {
        let taps = bilinear_taps(2, 2);
        let src: Vec<f64> = taps.iter().map(|&(i0, _, t)| i0 as f64 + t).collect();
        assert_eq!(src, vec![0.0, 0.25, 0.75, 1.0]);
    }
}
