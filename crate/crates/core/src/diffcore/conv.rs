//! 3-D cross-correlation on channel-last grids.
//!
//! Grid features are stored as `[X*Y*Z, C]` with z fastest. Weights are
//! `[kx*ky*kz*Cin, Cout]`, tap-major, so each tap is a `Cin × Cout` block.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{init_affine_bias, init_affine_weight, ParamId, ParamStore};
use super::tape::{CustomOp, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Same,
    Valid,
}

/// Static geometry of one convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub dims: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: Padding,
    pub cin: usize,
    pub cout: usize,
}

impl ConvGeom {
    fn pad(&self, axis: usize) -> usize {
        match self.padding {
            Padding::Same => self.kernel[axis] / 2,
            Padding::Valid => 0,
        }
    }

    pub fn out_dims(&self) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            if self.kernel[a] % 2 == 0 {
                return Err(Error::config(format!("kernel extents must be odd, got {:?}", self.kernel)));
            }
            let padded = self.dims[a] + 2 * self.pad(a);
            if self.kernel[a] > padded {
                return Err(Error::shape(format!(
                    "kernel {:?} larger than padded input {:?}",
                    self.kernel, self.dims
                )));
            }
            out[a] = (padded - self.kernel[a]) / self.stride[a].max(1) + 1;
        }
        Ok(out)
    }

    /// Visits every (output position, tap, input position) triple that
    /// falls inside the input.
    fn for_each_tap(&self, out: [usize; 3], mut f: impl FnMut(usize, usize, usize)) {
        let [nx, ny, nz] = self.dims;
        let [kx, ky, kz] = self.kernel;
        let (px, py, pz) = (self.pad(0) as isize, self.pad(1) as isize, self.pad(2) as isize);
        let [sx, sy, sz] = self.stride.map(|s| s.max(1) as isize);
        for ox in 0..out[0] {
            for oy in 0..out[1] {
                for oz in 0..out[2] {
                    let o = (ox * out[1] + oy) * out[2] + oz;
                    for tx in 0..kx {
                        let ix = ox as isize * sx + tx as isize - px;
                        if ix < 0 || ix >= nx as isize {
                            continue;
                        }
                        for ty in 0..ky {
                            let iy = oy as isize * sy + ty as isize - py;
                            if iy < 0 || iy >= ny as isize {
                                continue;
                            }
                            for tz in 0..kz {
                                let iz = oz as isize * sz + tz as isize - pz;
                                if iz < 0 || iz >= nz as isize {
                                    continue;
                                }
                                let tap = (tx * ky + ty) * kz + tz;
                                let i = (ix as usize * ny + iy as usize) * nz + iz as usize;
                                f(o, tap, i);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Plain (non-differentiable) evaluation.
pub fn conv3_value(input: &Tensor, weight: &Tensor, bias: &Tensor, geom: &ConvGeom) -> Result<(Tensor, [usize; 3])> {
    let out = geom.out_dims()?;
    let (cin, cout) = (geom.cin, geom.cout);
    let taps: usize = geom.kernel.iter().product();
    let npos: usize = geom.dims.iter().product();
    if input.rows() != npos || input.cols() != cin {
        return Err(Error::shape(format!(
            "conv3 input {:?} does not match grid {:?} with {cin} channels",
            input.shape(),
            geom.dims
        )));
    }
    if weight.len() != taps * cin * cout || bias.len() != cout {
        return Err(Error::shape(format!(
            "conv3 weight {:?} / bias {:?} do not match kernel {:?}, {cin}->{cout}",
            weight.shape(),
            bias.shape(),
            geom.kernel
        )));
    }
    let nout: usize = out.iter().product();
    let mut y = Vec::with_capacity(nout * cout);
    for _ in 0..nout {
        y.extend_from_slice(bias.data());
    }
    let (x, w) = (input.data(), weight.data());
    geom.for_each_tap(out, |o, tap, i| {
        let xr = &x[i * cin..(i + 1) * cin];
        let yr = &mut y[o * cout..(o + 1) * cout];
        for (ci, &xv) in xr.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wr = &w[(tap * cin + ci) * cout..(tap * cin + ci + 1) * cout];
            yr.iter_mut().zip(wr).for_each(|(a, b)| *a += xv * b);
        }
    });
    Ok((Tensor::from_parts(vec![nout, cout], y), out))
}

struct Conv3Op {
    geom: ConvGeom,
    out: [usize; 3],
}

impl CustomOp for Conv3Op {
    fn name(&self) -> &'static str {
        "conv3"
    }

    fn backward(&self, inputs: &[&Tensor], needs: &[bool], _output: &Tensor, g: &[f64]) -> Vec<Option<Vec<f64>>> {
        let (x, w) = (inputs[0].data(), inputs[1].data());
        let (cin, cout) = (self.geom.cin, self.geom.cout);
        let mut gx = needs[0].then(|| vec![0.0; x.len()]);
        let mut gw = needs[1].then(|| vec![0.0; w.len()]);
        self.geom.for_each_tap(self.out, |o, tap, i| {
            let gr = &g[o * cout..(o + 1) * cout];
            for ci in 0..cin {
                let base = (tap * cin + ci) * cout;
                if let Some(gx) = gx.as_mut() {
                    let wr = &w[base..base + cout];
                    gx[i * cin + ci] += gr.iter().zip(wr).map(|(a, b)| a * b).sum::<f64>();
                }
                if let Some(gw) = gw.as_mut() {
                    let xv = x[i * cin + ci];
                    if xv != 0.0 {
                        gw[base..base + cout].iter_mut().zip(gr).for_each(|(a, b)| *a += xv * b);
                    }
                }
            }
        });
        let gb = needs[2].then(|| {
            let mut gb = vec![0.0; cout];
            for r in g.chunks(cout) {
                gb.iter_mut().zip(r).for_each(|(a, b)| *a += b);
            }
            gb
        });
        vec![gx, gw, gb]
    }
}

/// Learnable 3-D convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3 {
    pub w: ParamId,
    pub b: ParamId,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: Padding,
    pub cin: usize,
    pub cout: usize,
}

impl Conv3 {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        padding: Padding,
        rng: &mut R,
    ) -> Result<Self> {
        if kernel.iter().any(|k| k % 2 == 0) {
            return Err(Error::config(format!("kernel extents must be odd, got {kernel:?}")));
        }
        let taps: usize = kernel.iter().product();
        let fan_in = taps * cin;
        let w = store.add(format!("{name}.w"), init_affine_weight(rng, fan_in, cout))?;
        let b = store.add(format!("{name}.b"), init_affine_bias(rng, fan_in, cout))?;
        Ok(Conv3 {
            w,
            b,
            kernel,
            stride,
            padding,
            cin,
            cout,
        })
    }

    pub fn geom(&self, dims: [usize; 3]) -> ConvGeom {
        ConvGeom {
            dims,
            kernel: self.kernel,
            stride: self.stride,
            padding: self.padding,
            cin: self.cin,
            cout: self.cout,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, dims: [usize; 3]) -> Result<(Var, [usize; 3])> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        conv3_forward(tape, x, w, b, self.geom(dims))
    }
}

/// Differentiable convolution of grid features `x` (`[X*Y*Z, Cin]`).
pub fn conv3_forward(tape: &mut Tape, x: Var, w: Var, b: Var, geom: ConvGeom) -> Result<(Var, [usize; 3])> {
    let (y, out) = conv3_value(tape.value(x), tape.value(w), tape.value(b), &geom)?;
    let v = tape.custom(vec![x, w, b], y, Box::new(Conv3Op { geom, out }));
    Ok((v, out))
}
