//! 3-D discrete Fourier transforms of arbitrary extent and the spectral
//! channel-mixing op built on them.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::tape::{CustomOp, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub use rustfft::num_complex::Complex64 as Complex;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// In-place unnormalised transform along all three axes of a z-fastest buffer.
fn transform3(buf: &mut [Complex64], dims: [usize; 3], inverse: bool) {
    let [nx, ny, nz] = dims;
    debug_assert_eq!(buf.len(), nx * ny * nz);
    if buf.is_empty() {
        return;
    }
    // z: contiguous lines
    let fz = plan(nz, inverse);
    for line in buf.chunks_mut(nz) {
        fz.process(line);
    }
    // y: stride nz
    let fy = plan(ny, inverse);
    let mut tmp = vec![Complex64::new(0.0, 0.0); ny];
    for ix in 0..nx {
        for iz in 0..nz {
            for iy in 0..ny {
                tmp[iy] = buf[(ix * ny + iy) * nz + iz];
            }
            fy.process(&mut tmp);
            for iy in 0..ny {
                buf[(ix * ny + iy) * nz + iz] = tmp[iy];
            }
        }
    }
    // x: stride ny*nz
    let fx = plan(nx, inverse);
    let mut tmp = vec![Complex64::new(0.0, 0.0); nx];
    let plane = ny * nz;
    for j in 0..plane {
        for ix in 0..nx {
            tmp[ix] = buf[ix * plane + j];
        }
        fx.process(&mut tmp);
        for ix in 0..nx {
            buf[ix * plane + j] = tmp[ix];
        }
    }
}

/// Forward DFT of a real field, `X[k] = sum_n x[n] exp(-2 pi i k.n / N)`.
pub fn fft3(field: &[f64], dims: [usize; 3]) -> Result<Vec<Complex64>> {
    check_len(field.len(), dims)?;
    let mut buf: Vec<Complex64> = field.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    transform3(&mut buf, dims, false);
    Ok(buf)
}

/// Forward DFT of a complex field.
pub fn fft3_complex(field: &[Complex64], dims: [usize; 3]) -> Result<Vec<Complex64>> {
    check_len(field.len(), dims)?;
    let mut buf = field.to_vec();
    transform3(&mut buf, dims, false);
    Ok(buf)
}

/// Inverse DFT including the `1/N` factor.
pub fn ifft3(spectrum: &[Complex64], dims: [usize; 3]) -> Result<Vec<Complex64>> {
    check_len(spectrum.len(), dims)?;
    let mut buf = spectrum.to_vec();
    transform3(&mut buf, dims, true);
    let s = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|c| *c *= s);
    Ok(buf)
}

fn check_len(len: usize, dims: [usize; 3]) -> Result<()> {
    if dims.iter().product::<usize>() != len || dims.contains(&0) {
        return Err(Error::shape(format!("field of {len} values does not fit extents {dims:?}")));
    }
    Ok(())
}

/// Flat spectrum indices kept by a filter with `modes` low frequencies per
/// axis: index `k` survives when `min(k, n - k) < m`.
pub fn retained_modes(dims: [usize; 3], modes: [usize; 3]) -> Result<Vec<usize>> {
    for a in 0..3 {
        if modes[a] == 0 || modes[a] > dims[a] {
            return Err(Error::config(format!(
                "retained modes {modes:?} must be within 1..=extents {dims:?}"
            )));
        }
    }
    let keep = |k: usize, n: usize, m: usize| k.min(n - k) < m;
    let [nx, ny, nz] = dims;
    let mut out = Vec::new();
    for kx in 0..nx {
        if !keep(kx, nx, modes[0]) {
            continue;
        }
        for ky in 0..ny {
            if !keep(ky, ny, modes[1]) {
                continue;
            }
            for kz in 0..nz {
                if keep(kz, nz, modes[2]) {
                    out.push((kx * ny + ky) * nz + kz);
                }
            }
        }
    }
    Ok(out)
}

/// Geometry of a spectral convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGeom {
    pub dims: [usize; 3],
    pub cin: usize,
    pub cout: usize,
    /// Flat indices of the retained modes, one weight block per entry.
    pub modes: Vec<usize>,
}

/// Per-mode complex mixing: `y_o = Re IDFT( sum_i R[mode][o, i] * DFT(x_i) )`.
///
/// `x` is `[P, cin]`; the real and imaginary weights are `[modes, cout*cin]`
/// with `(o, i)` stored at `o * cin + i`.
pub fn spectral_value(x: &Tensor, w_re: &Tensor, w_im: &Tensor, geom: &SpectralGeom) -> Result<(Tensor, Vec<Vec<Complex64>>)> {
    let p: usize = geom.dims.iter().product();
    let (cin, cout) = (geom.cin, geom.cout);
    if x.rows() != p || x.cols() != cin {
        return Err(Error::shape(format!(
            "spectral input {:?} does not match grid {:?} with {cin} channels",
            x.shape(),
            geom.dims
        )));
    }
    let nm = geom.modes.len();
    if w_re.len() != nm * cin * cout || w_im.len() != nm * cin * cout {
        return Err(Error::shape(format!(
            "spectral weights {:?} need {nm} x {cout}x{cin} entries",
            w_re.shape()
        )));
    }
    let xhat: Vec<Vec<Complex64>> = (0..cin)
        .map(|c| {
            let col: Vec<f64> = (0..p).map(|r| x.data()[r * cin + c]).collect();
            fft3(&col, geom.dims)
        })
        .collect::<Result<_>>()?;
    let mut y = vec![0.0; p * cout];
    for o in 0..cout {
        let mut yhat = vec![Complex64::new(0.0, 0.0); p];
        for (m, &f) in geom.modes.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, xi) in xhat.iter().enumerate() {
                let k = m * cout * cin + o * cin + i;
                acc += Complex64::new(w_re.data()[k], w_im.data()[k]) * xi[f];
            }
            yhat[f] = acc;
        }
        let yo = ifft3(&yhat, geom.dims)?;
        for r in 0..p {
            y[r * cout + o] = yo[r].re;
        }
    }
    Ok((Tensor::from_parts(vec![p, cout], y), xhat))
}

struct SpectralOp {
    geom: SpectralGeom,
    xhat: Vec<Vec<Complex64>>,
}

impl CustomOp for SpectralOp {
    fn name(&self) -> &'static str {
        "spectral"
    }

    fn backward(&self, inputs: &[&Tensor], needs: &[bool], _output: &Tensor, g: &[f64]) -> Vec<Option<Vec<f64>>> {
        let geom = &self.geom;
        let p: usize = geom.dims.iter().product();
        let (cin, cout) = (geom.cin, geom.cout);
        let (w_re, w_im) = (inputs[1].data(), inputs[2].data());
        // Adjoint of Re(IDFT): G_o = DFT(g_o) / N.
        let scale = 1.0 / p as f64;
        let ghat: Vec<Vec<Complex64>> = (0..cout)
            .map(|o| {
                let col: Vec<f64> = (0..p).map(|r| g[r * cout + o]).collect();
                let mut s = fft3(&col, geom.dims).expect("extents checked in forward");
                s.iter_mut().for_each(|c| *c *= scale);
                s
            })
            .collect();
        let nm = geom.modes.len();
        let want_w = needs[1] || needs[2];
        let mut g_re = vec![0.0; if want_w { nm * cout * cin } else { 0 }];
        let mut g_im = g_re.clone();
        let mut gx_hat = needs[0].then(|| vec![vec![Complex64::new(0.0, 0.0); p]; cin]);
        for (m, &f) in geom.modes.iter().enumerate() {
            for o in 0..cout {
                let go = ghat[o][f];
                for i in 0..cin {
                    let k = m * cout * cin + o * cin + i;
                    if want_w {
                        let gr = go * self.xhat[i][f].conj();
                        g_re[k] = gr.re;
                        g_im[k] = gr.im;
                    }
                    if let Some(gx) = gx_hat.as_mut() {
                        gx[i][f] += Complex64::new(w_re[k], w_im[k]).conj() * go;
                    }
                }
            }
        }
        let gx = gx_hat.map(|gx_hat| {
            // x is real: grad = Re(F^H grad_hat) = Re(N * IDFT(grad_hat)).
            let mut gx = vec![0.0; p * cin];
            for (i, gh) in gx_hat.iter().enumerate() {
                let back = ifft3(gh, geom.dims).expect("extents checked in forward");
                for r in 0..p {
                    gx[r * cin + i] = back[r].re * p as f64;
                }
            }
            gx
        });
        vec![
            gx,
            needs[1].then(|| g_re.clone()),
            needs[2].then_some(g_im),
        ]
    }
}

/// Differentiable spectral convolution.
pub fn spectral_forward(tape: &mut Tape, x: Var, w_re: Var, w_im: Var, geom: SpectralGeom) -> Result<Var> {
    let (y, xhat) = spectral_value(tape.value(x), tape.value(w_re), tape.value(w_im), &geom)?;
    Ok(tape.custom(vec![x, w_re, w_im], y, Box::new(SpectralOp { geom, xhat })))
}
