//! Independent scalar oracles for the forward operations. Each oracle reads
//! parameters by name and re-evaluates the defining formula with plain loops.

use std::f64::consts::PI;

use nob_core::diffcore::{
    adam_step, attention_forward, conv3_value, fft3, gru_forward, mlp_forward, siren_forward, Activation, ConvGeom,
    GruCell, Mlp, Padding, ParamStore, Tape, Tensor,
};
use nob_core::enhancements::{branch_fuse, BranchFuse};
use nob_core::geometry::{
    descriptors, grid_to_points, knn_neighbors, points_to_grid, radius_neighbors, voxelize, Graph, PairMaps,
    RegularGrid,
};
use nob_core::operators::{fourier_layer, DataDims, FourierLayer, GridSpec, Model, ModelConfig, ModelInput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Case {
    pub name: String,
    pub err: f64,
    pub tol: f64,
}

impl Case {
    fn new(name: &str, err: f64, tol: f64) -> Case {
        Case {
            name: name.to_string(),
            err: if err.is_nan() { f64::INFINITY } else { err },
            tol,
        }
    }

    pub fn pass(&self) -> bool {
        self.err < self.tol
    }
}

pub fn all() -> Vec<Case> {
    vec![
        mlp_case(),
        siren_case(),
        gru_case(),
        attention_case(),
        conv_case(),
        dft_case(),
        adam_case(),
        deeponet_case(),
        geom_deeponet_case(),
        s_deeponet_case(),
        s_not_case(),
        dcon_case(),
        gano_case(false),
        gano_case(true),
        gno_case(),
        fourier_case(),
        fourier_identity_case(),
        gino_case(),
        figconv_case(),
        pointnet_case(),
        gnot_case(),
        transolver_case(),
        points_to_grid_case(),
        grid_to_points_case(),
        branch_fuse_case(),
        voxel_map_case(),
        voxel_shift_case(),
        descriptor_case(),
        radius_case(),
        knn_case(),
    ]
}

// ---- scalar helpers ----

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(r: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| r.random_range(lo..hi)).collect()
}

fn cloud(r: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 3]> {
    (0..n).map(|_| [r.random(), r.random(), r.random()]).collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn act(a: Activation, x: f64) -> f64 {
    match a {
        Activation::Relu => {
            if x > 0.0 {
                x
            } else {
                0.0
            }
        }
        Activation::Gelu => 0.5 * x * (1.0 + ((2.0 / PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh()),
        Activation::Tanh => x.tanh(),
        Activation::Sin => x.sin(),
        Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        Activation::Identity => x,
    }
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn param<'a>(s: &'a ParamStore, name: &str) -> &'a Tensor {
    s.value(s.id(name).unwrap_or_else(|| panic!("no parameter `{name}`")))
}

/// `x W + b` for the layer stored as `{name}.w`, `{name}.b`.
fn affine(s: &ParamStore, name: &str, x: &[f64]) -> Vec<f64> {
    let w = param(s, &format!("{name}.w"));
    let b = param(s, &format!("{name}.b")).data();
    let (rows, cols) = (w.rows(), w.cols());
    assert_eq!(rows, x.len(), "{name}: input width");
    (0..cols)
        .map(|j| {
            let mut acc = b[j];
            for i in 0..rows {
                acc += x[i] * w.data()[i * cols + j];
            }
            acc
        })
        .collect()
}

fn dense(s: &ParamStore, name: &str, x: &[f64], a: Activation) -> Vec<f64> {
    affine(s, name, x).into_iter().map(|v| act(a, v)).collect()
}

fn depth(s: &ParamStore, name: &str) -> usize {
    (0..).take_while(|i| s.id(&format!("{name}.{i}.w")).is_some()).count()
}

fn mlp(s: &ParamStore, name: &str, x: &[f64], hidden: Activation, out: Activation) -> Vec<f64> {
    let n = depth(s, name);
    let mut h = x.to_vec();
    for i in 0..n {
        h = dense(s, &format!("{name}.{i}"), &h, if i + 1 == n { out } else { hidden });
    }
    h
}

fn siren(s: &ParamStore, name: &str, x: &[f64], w0: f64) -> Vec<f64> {
    let n = depth(s, name);
    let mut h = x.to_vec();
    for i in 0..n {
        let z = affine(s, &format!("{name}.{i}"), &h);
        h = if i + 1 == n { z } else { z.iter().map(|v| (w0 * v).sin()).collect() };
    }
    h
}

fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn cat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = a.to_vec();
    v.extend_from_slice(b);
    v
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}

fn d2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum()
}

/// Rows of softmax(q k^T / tau) v.
fn attend(q: &[Vec<f64>], k: &[Vec<f64>], v: &[Vec<f64>], tau: f64) -> Vec<Vec<f64>> {
    q.iter()
        .map(|qi| {
            let e: Vec<f64> = k
                .iter()
                .map(|kj| (qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() / tau).exp())
                .collect();
            let z: f64 = e.iter().sum();
            let mut out = vec![0.0; v[0].len()];
            for (ej, vj) in e.iter().zip(v) {
                for (o, x) in out.iter_mut().zip(vj) {
                    *o += ej / z * x;
                }
            }
            out
        })
        .collect()
}

/// Single- or multi-head self-attention over rows, parameters `{name}.q|k|v[|o]`.
fn self_attention(s: &ParamStore, name: &str, x: &[Vec<f64>], heads: usize, out_proj: bool) -> Vec<Vec<f64>> {
    let proj = |p: &str| -> Vec<Vec<f64>> { x.iter().map(|r| affine(s, &format!("{name}.{p}"), r)).collect() };
    let (q, k, v) = (proj("q"), proj("k"), proj("v"));
    let d = q[0].len();
    let dh = d / heads;
    let tau = (dh as f64).sqrt();
    let mut y = vec![vec![0.0; d]; x.len()];
    for h in 0..heads {
        let sl = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> { m.iter().map(|r| r[h * dh..(h + 1) * dh].to_vec()).collect() };
        let o = attend(&sl(&q), &sl(&k), &sl(&v), tau);
        for (yr, or) in y.iter_mut().zip(&o) {
            yr[h * dh..(h + 1) * dh].copy_from_slice(or);
        }
    }
    if out_proj {
        y.iter().map(|r| affine(s, &format!("{name}.o"), r)).collect()
    } else {
        y
    }
}

/// Naive cross-correlation with zero padding. `x` is `[X*Y*Z, cin]`, weights tap-major.
fn naive_conv(
    x: &[f64],
    dims: [usize; 3],
    cin: usize,
    w: &Tensor,
    b: &[f64],
    kernel: [usize; 3],
    stride: [usize; 3],
    same: bool,
) -> (Vec<f64>, [usize; 3]) {
    let cout = w.cols();
    let pad: [usize; 3] = std::array::from_fn(|a| if same { kernel[a] / 2 } else { 0 });
    let od: [usize; 3] = std::array::from_fn(|a| (dims[a] + 2 * pad[a] - kernel[a]) / stride[a] + 1);
    let mut y = vec![0.0; od.iter().product::<usize>() * cout];
    for ox in 0..od[0] {
        for oy in 0..od[1] {
            for oz in 0..od[2] {
                let o = (ox * od[1] + oy) * od[2] + oz;
                for co in 0..cout {
                    let mut acc = b[co];
                    for tx in 0..kernel[0] {
                        for ty in 0..kernel[1] {
                            for tz in 0..kernel[2] {
                                let ix = (ox * stride[0] + tx) as isize - pad[0] as isize;
                                let iy = (oy * stride[1] + ty) as isize - pad[1] as isize;
                                let iz = (oz * stride[2] + tz) as isize - pad[2] as isize;
                                if ix < 0
                                    || iy < 0
                                    || iz < 0
                                    || ix >= dims[0] as isize
                                    || iy >= dims[1] as isize
                                    || iz >= dims[2] as isize
                                {
                                    continue;
                                }
                                let n = ((ix as usize) * dims[1] + iy as usize) * dims[2] + iz as usize;
                                let tap = (tx * kernel[1] + ty) * kernel[2] + tz;
                                for ci in 0..cin {
                                    acc += x[n * cin + ci] * w.data()[(tap * cin + ci) * cout + co];
                                }
                            }
                        }
                    }
                    y[o * cout + co] = acc;
                }
            }
        }
    }
    (y, od)
}

/// Naive forward DFT of one scalar field, returned as (re, im).
fn naive_dft(f: &[f64], dims: [usize; 3]) -> Vec<(f64, f64)> {
    let [nx, ny, nz] = dims;
    let mut out = Vec::with_capacity(f.len());
    for kx in 0..nx {
        for ky in 0..ny {
            for kz in 0..nz {
                let (mut re, mut im) = (0.0, 0.0);
                for x in 0..nx {
                    for y in 0..ny {
                        for z in 0..nz {
                            let ph = -2.0
                                * PI
                                * ((kx * x) as f64 / nx as f64 + (ky * y) as f64 / ny as f64 + (kz * z) as f64 / nz as f64);
                            let v = f[(x * ny + y) * nz + z];
                            re += v * ph.cos();
                            im += v * ph.sin();
                        }
                    }
                }
                out.push((re, im));
            }
        }
    }
    out
}

/// `Re IDFT(sum_i R[o,i] DFT(x_i))` over the retained modes, all by direct summation.
fn naive_spectral(x: &[f64], dims: [usize; 3], cin: usize, cout: usize, modes: [usize; 3], wr: &Tensor, wi: &Tensor) -> Vec<f64> {
    let p: usize = dims.iter().product();
    let spectra: Vec<Vec<(f64, f64)>> = (0..cin)
        .map(|c| naive_dft(&(0..p).map(|n| x[n * cin + c]).collect::<Vec<_>>(), dims))
        .collect();
    let keep = |k: usize, n: usize, m: usize| k.min(n - k) < m;
    let mut y = vec![0.0; p * cout];
    let mut m = 0;
    for kx in 0..dims[0] {
        for ky in 0..dims[1] {
            for kz in 0..dims[2] {
                if !(keep(kx, dims[0], modes[0]) && keep(ky, dims[1], modes[1]) && keep(kz, dims[2], modes[2])) {
                    continue;
                }
                let kf = (kx * dims[1] + ky) * dims[2] + kz;
                for o in 0..cout {
                    let (mut re, mut im) = (0.0, 0.0);
                    for i in 0..cin {
                        let (a, b) = (wr.data()[m * cout * cin + o * cin + i], wi.data()[m * cout * cin + o * cin + i]);
                        let (xr, xi) = spectra[i][kf];
                        re += a * xr - b * xi;
                        im += a * xi + b * xr;
                    }
                    for x0 in 0..dims[0] {
                        for x1 in 0..dims[1] {
                            for x2 in 0..dims[2] {
                                let ph = 2.0
                                    * PI
                                    * ((kx * x0) as f64 / dims[0] as f64
                                        + (ky * x1) as f64 / dims[1] as f64
                                        + (kz * x2) as f64 / dims[2] as f64);
                                let n = (x0 * dims[1] + x1) * dims[2] + x2;
                                y[n * cout + o] += (re * ph.cos() - im * ph.sin()) / p as f64;
                            }
                        }
                    }
                }
                m += 1;
            }
        }
    }
    y
}

fn lattice(dims: [usize; 3], lo: [f64; 3], hi: [f64; 3]) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let idx = [i, j, k];
                out.push(std::array::from_fn(|a| {
                    if dims[a] == 1 {
                        lo[a]
                    } else {
                        lo[a] + idx[a] as f64 * (hi[a] - lo[a]) / (dims[a] - 1) as f64
                    }
                }));
            }
        }
    }
    out
}

/// Dense-pair transfer: `out_d = sum_{|x_s - x_d| <= r} f(src_s) * mp([src_s, dst_d])`.
fn dense_transfer(
    s: &ParamStore,
    name: &str,
    src_x: &[[f64; 3]],
    src: &[Vec<f64>],
    dst_x: &[[f64; 3]],
    dst: &[Vec<f64>],
    r: f64,
    a: Activation,
) -> Vec<Vec<f64>> {
    let fs: Vec<Vec<f64>> = src.iter().map(|v| mlp(s, &format!("{name}.f"), v, Activation::Identity, Activation::Identity)).collect();
    let d = fs[0].len();
    dst_x
        .iter()
        .zip(dst)
        .map(|(xd, vd)| {
            let mut acc = vec![0.0; d];
            for (si, xs) in src_x.iter().enumerate() {
                if d2(xs, xd) <= r * r {
                    let w = mlp(s, &format!("{name}.mp"), &cat(&src[si], vd), a, Activation::Identity);
                    let m: Vec<f64> = if w.len() == 1 { fs[si].iter().map(|v| v * w[0]).collect() } else { hadamard(&fs[si], &w) };
                    add_into(&mut acc, &m);
                }
            }
            acc
        })
        .collect()
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row_slice(r).to_vec()).collect()
}

fn flat(v: &[Vec<f64>]) -> Vec<f64> {
    v.iter().flatten().copied().collect()
}

/// Group-summed branch-trunk reduction plus bias.
fn reduce(b: &[f64], t: &[f64], bias: &[f64]) -> Vec<f64> {
    let c = bias.len();
    let h = b.len() / c;
    (0..c).map(|g| (0..h).map(|j| b[g * h + j] * t[g * h + j]).sum::<f64>() + bias[g]).collect()
}

fn model_case(name: &str, model: &Model, input: &ModelInput, oracle: Vec<Vec<f64>>, tol: f64) -> Case {
    let got = model.predict(input).expect("forward");
    let (lo, hi) = got.data().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo < 1e-9 {
        // a constant prediction would make the comparison vacuous
        return Case::new(name, f64::INFINITY, tol);
    }
    Case::new(name, max_diff(got.data(), &flat(&oracle)), tol)
}

fn small(arch: &str, hidden: usize, layers: usize) -> ModelConfig {
    let mut c = ModelConfig::new(arch).unwrap();
    c.hidden = Some(hidden);
    c.layers = layers;
    c
}

fn input(r: &mut ChaCha8Rng, n: usize, dims: &DataDims) -> ModelInput {
    let coords = cloud(r, n);
    let params = uniform(r, dims.geo_dim, -1.0, 1.0);
    let loads = uniform(r, dims.load_dim, -1.0, 1.0);
    ModelInput::new(coords, params, loads)
}

// ---- core layers ----

pub fn mlp_case() -> Case {
    let mut s = ParamStore::new();
    let net = Mlp::new(&mut s, "net", &[2, 3, 1], Activation::Tanh, Activation::Identity, &mut rng(42)).unwrap();
    let mut t = Tape::new();
    let x = t.constant(Tensor::row(vec![0.5, -0.5]));
    let y = mlp_forward(&mut t, x, &net.layers, &s).unwrap();
    let (w0, b0, w1, b1) = (
        param(&s, "net.0.w").data(),
        param(&s, "net.0.b").data(),
        param(&s, "net.1.w").data(),
        param(&s, "net.1.b").data(),
    );
    let mut want = b1[0];
    for j in 0..3 {
        let h = (0.5 * w0[j] - 0.5 * w0[3 + j] + b0[j]).tanh();
        want += h * w1[j];
    }
    Case::new("mlp 2-3-1 tanh", (t.value(y).data()[0] - want).abs(), 1e-12)
}

pub fn siren_case() -> Case {
    let mut s = ParamStore::new();
    let w0 = 30.0;
    let net = Mlp::siren(&mut s, "net", &[2, 3, 1], w0, &mut rng(5)).unwrap();
    let x = [0.3, -0.7];
    let mut t = Tape::new();
    let xv = t.constant(Tensor::row(x.to_vec()));
    let y = siren_forward(&mut t, xv, &net.layers, &s, w0).unwrap();
    let (a, b, c, d) = (
        param(&s, "net.0.w").data(),
        param(&s, "net.0.b").data(),
        param(&s, "net.1.w").data(),
        param(&s, "net.1.b").data(),
    );
    let mut want = d[0];
    for j in 0..3 {
        want += (w0 * (x[0] * a[j] + x[1] * a[3 + j] + b[j])).sin() * c[j];
    }
    Case::new("siren 3-unit", (t.value(y).data()[0] - want).abs(), 1e-12)
}

pub fn gru_case() -> Case {
    let (d, h) = (2, 3);
    let mut s = ParamStore::new();
    let mut r = rng(7);
    let cell = GruCell::new(&mut s, "g", d, h, &mut r).unwrap();
    let seq = uniform(&mut r, 3 * d, -1.0, 1.0);
    let mut t = Tape::new();
    let sv = t.constant(Tensor::matrix(3, d, seq.clone()).unwrap());
    let y = gru_forward(&mut t, sv, &cell, &s).unwrap();
    let (wi, wh, bi, bh) = (
        s.value(cell.w_in).data(),
        s.value(cell.w_hid).data(),
        s.value(cell.b_in).data(),
        s.value(cell.b_hid).data(),
    );
    let g = 3 * h;
    let mut hs = vec![0.0; h];
    for step in 0..3 {
        let x = &seq[step * d..(step + 1) * d];
        let xi: Vec<f64> = (0..g).map(|c| bi[c] + (0..d).map(|k| x[k] * wi[k * g + c]).sum::<f64>()).collect();
        let hh: Vec<f64> = (0..g).map(|c| bh[c] + (0..h).map(|k| hs[k] * wh[k * g + c]).sum::<f64>()).collect();
        let mut next = vec![0.0; h];
        for u in 0..h {
            let rg = sig(xi[u] + hh[u]);
            let zg = sig(xi[h + u] + hh[h + u]);
            let n = (xi[2 * h + u] + rg * hh[2 * h + u]).tanh();
            next[u] = (1.0 - zg) * n + zg * hs[u];
        }
        hs = next;
    }
    Case::new("gru T=3", max_diff(t.value(y).data(), &hs), 1e-12)
}

pub fn attention_case() -> Case {
    let mut r = rng(17);
    let d = 4;
    let q = uniform(&mut r, 2 * d, -1.0, 1.0);
    let k = uniform(&mut r, 3 * d, -1.0, 1.0);
    let v = uniform(&mut r, 3 * d, -1.0, 1.0);
    let tau = 1.7;
    let mut t = Tape::new();
    let (qv, kv, vv) = (
        t.constant(Tensor::matrix(2, d, q.clone()).unwrap()),
        t.constant(Tensor::matrix(3, d, k.clone()).unwrap()),
        t.constant(Tensor::matrix(3, d, v.clone()).unwrap()),
    );
    let y = attention_forward(&mut t, qv, kv, vv, tau).unwrap();
    let split = |m: &[f64]| -> Vec<Vec<f64>> { m.chunks(d).map(|c| c.to_vec()).collect() };
    let want = attend(&split(&q), &split(&k), &split(&v), tau);
    Case::new("attention Nq=2 Nk=3", max_diff(t.value(y).data(), &flat(&want)), 1e-12)
}

pub fn conv_case() -> Case {
    let mut r = rng(23);
    let dims = [4, 4, 4];
    let (cin, cout) = (2, 3);
    let x = uniform(&mut r, 64 * cin, -1.0, 1.0);
    let mut err: f64 = 0.0;
    for (kernel, stride, pad) in [
        ([3, 3, 3], [1, 1, 1], Padding::Same),
        ([3, 3, 3], [2, 2, 2], Padding::Same),
        ([3, 1, 3], [1, 1, 2], Padding::Valid),
    ] {
        let taps: usize = kernel.iter().product();
        let w = Tensor::matrix(taps * cin, cout, uniform(&mut r, taps * cin * cout, -1.0, 1.0)).unwrap();
        let b = uniform(&mut r, cout, -1.0, 1.0);
        let geom = ConvGeom {
            dims,
            kernel,
            stride,
            padding: pad,
            cin,
            cout,
        };
        let xt = Tensor::matrix(64, cin, x.clone()).unwrap();
        let (y, od) = conv3_value(&xt, &w, &Tensor::row(b.clone()), &geom).unwrap();
        let (want, wd) = naive_conv(&x, dims, cin, &w, &b, kernel, stride, pad == Padding::Same);
        err = err.max(if od == wd { max_diff(y.data(), &want) } else { f64::INFINITY });
    }
    Case::new("conv3 4^3", err, 1e-12)
}

pub fn dft_case() -> Case {
    let mut r = rng(29);
    let dims = [4, 4, 4];
    let f = uniform(&mut r, 64, -1.0, 1.0);
    let got = fft3(&f, dims).unwrap();
    let want = naive_dft(&f, dims);
    let err = got
        .iter()
        .zip(&want)
        .map(|(g, w)| (g.re - w.0).abs().max((g.im - w.1).abs()))
        .fold(0.0, f64::max);
    Case::new("fft3 vs naive DFT", err, 1e-9)
}

pub fn adam_case() -> Case {
    let mut s = ParamStore::new();
    let id = s.add("p", Tensor::scalar(1.0)).unwrap();
    s.accumulate(&[vec![2.0]], 1.0).unwrap();
    adam_step(&mut s, 0.001, 0.9, 0.999, 1e-8).unwrap();
    let want = 1.0 - 0.001 * (2.0 / (2.0 + 1e-8));
    Case::new("adam first step", (s.value(id).data()[0] - want).abs(), 1e-15)
}

// ---- branch-trunk family ----

pub fn deeponet_case() -> Case {
    let dims = DataDims::new(2, 3, 2);
    let m = Model::build(&small("deeponet", 4, 2), &dims, 11).unwrap();
    let x = input(&mut rng(111), 4, &dims);
    let s = &m.store;
    let a = Activation::Gelu;
    let b = mlp(s, "branch", &x.static_vector(), a, Activation::Identity);
    let bias = param(s, "head.b").data();
    let want = x.coords.iter().map(|p| reduce(&b, &mlp(s, "trunk", p, a, a), bias)).collect();
    model_case("deeponet", &m, &x, want, 1e-10)
}

pub fn geom_deeponet_case() -> Case {
    let dims = DataDims::new(2, 3, 2);
    let mut cfg = small("geom-deeponet", 4, 2);
    cfg.omega0 = 3.0;
    let m = Model::build(&cfg, &dims, 12).unwrap();
    let x = input(&mut rng(112), 5, &dims);
    let s = &m.store;
    let a = Activation::Gelu;
    let b = siren(s, "branch", &x.static_vector(), 3.0);
    let bias = param(s, "head.b").data();
    let want = x.coords.iter().map(|p| reduce(&b, &mlp(s, "trunk", p, a, a), bias)).collect();
    model_case("geom-deeponet", &m, &x, want, 1e-10)
}

fn gru_oracle(s: &ParamStore, name: &str, seq: &[Vec<f64>]) -> Vec<f64> {
    let wi = param(s, &format!("{name}.w_in"));
    let wh = param(s, &format!("{name}.w_hid")).data();
    let (bi, bh) = (param(s, &format!("{name}.b_in")).data(), param(s, &format!("{name}.b_hid")).data());
    let g = wi.cols();
    let h = g / 3;
    let mut hs = vec![0.0; h];
    for x in seq {
        let xi: Vec<f64> = (0..g).map(|c| bi[c] + x.iter().enumerate().map(|(k, v)| v * wi.data()[k * g + c]).sum::<f64>()).collect();
        let hh: Vec<f64> = (0..g).map(|c| bh[c] + (0..h).map(|k| hs[k] * wh[k * g + c]).sum::<f64>()).collect();
        hs = (0..h)
            .map(|u| {
                let rg = sig(xi[u] + hh[u]);
                let zg = sig(xi[h + u] + hh[h + u]);
                let n = (xi[2 * h + u] + rg * hh[2 * h + u]).tanh();
                (1.0 - zg) * n + zg * hs[u]
            })
            .collect();
    }
    hs
}

pub fn s_deeponet_case() -> Case {
    let dims = DataDims::new(2, 4, 1);
    let m = Model::build(&small("s-deeponet", 4, 2), &dims, 14).unwrap();
    let x = input(&mut rng(114), 4, &dims);
    let s = &m.store;
    let a = Activation::Gelu;
    let seq: Vec<Vec<f64>> = x.loads.iter().map(|&l| cat(&[l], &x.params)).collect();
    let b = gru_oracle(s, "branch.gru", &seq);
    let bias = param(s, "head.b").data();
    let want = x.coords.iter().map(|p| reduce(&b, &mlp(s, "trunk", p, a, a), bias)).collect();
    model_case("s-deeponet", &m, &x, want, 1e-10)
}

pub fn s_not_case() -> Case {
    let dims = DataDims::new(2, 3, 2);
    let m = Model::build(&small("s-not", 4, 2), &dims, 15).unwrap();
    let x = input(&mut rng(115), 4, &dims);
    let s = &m.store;
    let a = Activation::Gelu;
    let tokens: Vec<Vec<f64>> = x
        .loads
        .iter()
        .enumerate()
        .map(|(t, &l)| {
            let pe: Vec<f64> = (0..8)
                .map(|k| {
                    let ang = t as f64 / 10000f64.powf((k - k % 2) as f64 / 8.0);
                    if k % 2 == 0 {
                        ang.sin()
                    } else {
                        ang.cos()
                    }
                })
                .collect();
            cat(&cat(&[l], &x.params), &pe)
        })
        .collect();
    let e: Vec<Vec<f64>> = tokens.iter().map(|tk| dense(s, "branch.embed", tk, a)).collect();
    let att = self_attention(s, "branch.attn", &e, 2, true);
    let h = e[0].len();
    let mut pooled = vec![0.0; h];
    for (er, ar) in e.iter().zip(&att) {
        for k in 0..h {
            pooled[k] += (er[k] + ar[k]) / e.len() as f64;
        }
    }
    let b = mlp(s, "branch.post", &pooled, a, Activation::Identity);
    let bias = param(s, "head.b").data();
    let want = x.coords.iter().map(|p| reduce(&b, &mlp(s, "trunk", p, a, a), bias)).collect();
    model_case("s-not", &m, &x, want, 1e-10)
}

fn compose(s: &ParamStore, b: &[f64], z: Vec<f64>, layers: usize, a: Activation) -> Vec<f64> {
    let mut h = z;
    for k in 0..layers {
        h = dense(s, &format!("op.{k}"), &hadamard(&h, b), a);
    }
    affine(s, "head", &h)
}

pub fn dcon_case() -> Case {
    let dims = DataDims::new(2, 3, 2);
    let m = Model::build(&small("dcon", 5, 2), &dims, 3).unwrap();
    let x = input(&mut rng(103), 4, &dims);
    let s = &m.store;
    let a = Activation::Gelu;
    let b = mlp(s, "branch", &x.static_vector(), a, Activation::Identity);
    let want = x.coords.iter().map(|p| compose(s, &b, mlp(s, "trunk", p, a, a), 2, a)).collect();
    model_case("dcon L=2", &m, &x, want, 1e-10)
}

pub fn gano_case(geometry_only: bool) -> Case {
    let dims = if geometry_only { DataDims::new(0, 0, 1) } else { DataDims::new(2, 3, 2) };
    let m = Model::build(&small("gano", 4, 2), &dims, 16).unwrap();
    let x = input(&mut rng(116), 10, &dims);
    let s = &m.store;
    let a = Activation::Gelu;
    let enc: Vec<Vec<f64>> = x.coords.iter().map(|p| mlp(s, "geo.enc", p, a, a)).collect();
    let mut eg = vec![0.0; enc[0].len()];
    for e in &enc {
        for (g, v) in eg.iter_mut().zip(e) {
            *g += v / enc.len() as f64;
        }
    }
    let bin = if geometry_only { eg.clone() } else { x.static_vector() };
    let b = mlp(s, "branch", &bin, a, Activation::Identity);
    let want = x.coords.iter().map(|p| compose(s, &b, cat(&mlp(s, "trunk", p, a, a), &eg), 2, a)).collect();
    let name = if geometry_only { "gano (geometry branch)" } else { "gano" };
    model_case(name, &m, &x, want, 1e-10)
}

// ---- graph family ----

pub fn gno_case() -> Case {
    let dims = DataDims::new(0, 0, 1);
    let m = Model::build(&small("gno", 4, 1), &dims, 9).unwrap();
    let mut r = rng(109);
    let n = 5;
    let mut x = input(&mut r, n, &dims);
    let mut adj = vec![vec![false; n]; n];
    for (i, row) in adj.iter_mut().enumerate() {
        for (j, a) in row.iter_mut().enumerate() {
            *a = i == j || r.random_bool(0.4);
        }
    }
    let lists = (0..n).map(|i| (0..n).filter(|&j| j != i && adj[i][j]).collect()).collect();
    x.edges = Some(Graph::from_lists(lists));
    let s = &m.store;
    let a = Activation::Relu;
    let v: Vec<Vec<f64>> = x.coords.iter().map(|p| dense(s, "lift", p, a)).collect();
    let f: Vec<Vec<f64>> = v.iter().map(|vj| affine(s, "gc.0.f.0", vj)).collect();
    let mut out = Vec::new();
    for i in 0..n {
        let mut acc = vec![0.0; v[0].len()];
        for j in 0..n {
            if adj[i][j] {
                let disp: Vec<f64> = (0..3).map(|k| x.coords[j][k] - x.coords[i][k]).collect();
                let w = mlp(s, "gc.0.mp", &cat(&cat(&v[j], &v[i]), &disp), a, Activation::Identity);
                add_into(&mut acc, &hadamard(&f[j], &w));
            }
        }
        let h: Vec<f64> = acc.iter().map(|&u| act(a, u)).collect();
        out.push(mlp(s, "head", &h, a, Activation::Identity));
    }
    model_case("gno 5-node", &m, &x, out, 1e-10)
}

// ---- grid family ----

pub fn fourier_case() -> Case {
    fourier_case_seeded(0)
}

pub fn fourier_case_seeded(seed: u64) -> Case {
    let mut s = ParamStore::new();
    let dims = [4, 4, 4];
    let layer = FourierLayer::new(&mut s, "fl", dims, [2, 2, 2], 2, 2, false, &mut rng(31 + 2 * seed)).unwrap();
    let x = uniform(&mut rng(32 + 2 * seed), 64 * 2, -1.0, 1.0);
    let mut t = Tape::new();
    let xv = t.constant(Tensor::matrix(64, 2, x.clone()).unwrap());
    let y = fourier_layer(&mut t, &s, xv, &layer, Activation::Identity).unwrap();
    let want = naive_spectral(&x, dims, 2, 2, [2, 2, 2], s.value(layer.w_re), s.value(layer.w_im));
    Case::new("fourier layer 4^3 x2", max_diff(t.value(y).data(), &want), 1e-8)
}

pub fn fourier_identity_case() -> Case {
    let mut s = ParamStore::new();
    let dims = [4, 4, 4];
    let c = 2;
    let layer = FourierLayer::new(&mut s, "fl", dims, [4, 4, 4], c, c, false, &mut rng(33)).unwrap();
    let nm = layer.geom.modes.len();
    let re = s.value_mut(layer.w_re).data_mut();
    re.fill(0.0);
    for m in 0..nm {
        for o in 0..c {
            re[m * c * c + o * c + o] = 1.0;
        }
    }
    s.value_mut(layer.w_im).data_mut().fill(0.0);
    let x = uniform(&mut rng(34), 64 * c, -1.0, 1.0);
    let mut t = Tape::new();
    let xv = t.constant(Tensor::matrix(64, c, x.clone()).unwrap());
    let y = fourier_layer(&mut t, &s, xv, &layer, Activation::Identity).unwrap();
    Case::new("fourier full modes identity", max_diff(t.value(y).data(), &x), 1e-9)
}

pub fn gino_case() -> Case {
    let dims = DataDims::new(0, 0, 1);
    let mut cfg = small("gino", 4, 1);
    cfg.modes = [2, 2, 2];
    cfg.radius = Some(0.6);
    cfg.activation = Some(Activation::Gelu);
    cfg.grid = Some(GridSpec {
        dims: [3, 3, 3],
        lo: [0.0; 3],
        hi: [1.0; 3],
    });
    let m = Model::build(&cfg, &dims, 18).unwrap();
    let x = input(&mut rng(118), 8, &dims);
    let s = &m.store;
    let a = Activation::Gelu;
    let nodes = lattice([3, 3, 3], [0.0; 3], [1.0; 3]);
    let feats: Vec<Vec<f64>> = x.coords.iter().map(|p| p.to_vec()).collect();
    let nf: Vec<Vec<f64>> = nodes.iter().map(|p| p.to_vec()).collect();
    let g = dense_transfer(s, "enc", &x.coords, &feats, &nodes, &nf, 0.6, a);
    let h = g[0].len();
    let spec = naive_spectral(&flat(&g), [3, 3, 3], h, h, [2, 2, 2], param(s, "fl.0.r_re"), param(s, "fl.0.r_im"));
    let g1: Vec<Vec<f64>> = g
        .iter()
        .enumerate()
        .map(|(n, row)| {
            let by = affine(s, "fl.0.w", row);
            (0..h).map(|o| act(a, spec[n * h + o] + by[o])).collect()
        })
        .collect();
    let v = dense_transfer(s, "dec", &nodes, &g1, &x.coords, &feats, 0.6, a);
    let want = v.iter().map(|vi| mlp(s, "head", vi, a, Activation::Identity)).collect();
    model_case("gino chain", &m, &x, want, 1e-8)
}

fn nearest_up(coarse: &[f64], cd: [usize; 3], fd: [usize; 3], stride: [usize; 3], c: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..fd[0] {
        for j in 0..fd[1] {
            for k in 0..fd[2] {
                let n = ((i / stride[0]) * cd[1] + j / stride[1]) * cd[2] + k / stride[2];
                out.extend_from_slice(&coarse[n * c..(n + 1) * c]);
            }
        }
    }
    out
}

fn conv_layer(s: &ParamStore, name: &str, x: &[f64], dims: [usize; 3], cin: usize, stride: [usize; 3], a: Activation) -> (Vec<f64>, [usize; 3]) {
    let kernel = dims.map(|d| if d > 1 { 3 } else { 1 });
    let (y, od) = naive_conv(
        x,
        dims,
        cin,
        param(s, &format!("{name}.w")),
        param(s, &format!("{name}.b")).data(),
        kernel,
        stride,
        true,
    );
    (y.into_iter().map(|v| act(a, v)).collect(), od)
}

pub fn figconv_case() -> Case {
    let dims = DataDims::new(0, 0, 1);
    let mut cfg = small("figconv", 3, 1);
    cfg.unet_depth = 1;
    cfg.radius = Some(0.45);
    cfg.grid = Some(GridSpec {
        dims: [4, 4, 4],
        lo: [0.0; 3],
        hi: [1.0; 3],
    });
    let m = Model::build(&cfg, &dims, 19).unwrap();
    let x = input(&mut rng(119), 8, &dims);
    let s = &m.store;
    let a = Activation::Relu;
    let r = 0.45;
    let feats: Vec<Vec<f64>> = x.coords.iter().map(|p| p.to_vec()).collect();
    let mut total = vec![vec![0.0; 3]; x.coords.len()];
    for (drop, label) in [(2, "xy"), (0, "yz"), (1, "xz")] {
        let mut pd = [4, 4, 4];
        pd[drop] = 1;
        let mut nodes = lattice([4, 4, 4], [0.0; 3], [1.0; 3]);
        nodes.retain(|p| p[drop] == 0.0);
        let proj: Vec<[f64; 3]> = x
            .coords
            .iter()
            .map(|p| {
                let mut q = *p;
                q[drop] = 0.0;
                q
            })
            .collect();
        let nf: Vec<Vec<f64>> = nodes.iter().map(|p| p.to_vec()).collect();
        let g = dense_transfer(s, &format!("enc.{label}"), &proj, &feats, &nodes, &nf, r, a);
        let h = 3;
        let stride = pd.map(|d| if d > 1 { 2 } else { 1 });
        let (d0, _) = conv_layer(s, &format!("unet.{label}.d0"), &flat(&g), pd, h, [1; 3], a);
        let (d1, cd) = conv_layer(s, &format!("unet.{label}.d1"), &d0, pd, h, stride, a);
        let up = nearest_up(&d1, cd, pd, stride, h);
        let catted: Vec<f64> = (0..pd.iter().product::<usize>())
            .flat_map(|n| cat(&up[n * h..(n + 1) * h], &d0[n * h..(n + 1) * h]))
            .collect();
        let (u, _) = conv_layer(s, &format!("unet.{label}.u0"), &catted, pd, 2 * h, [1; 3], a);
        let un: Vec<Vec<f64>> = u.chunks(h).map(|c| c.to_vec()).collect();
        let v = dense_transfer(s, &format!("dec.{label}"), &nodes, &un, &proj, &feats, r, a);
        for (t, vi) in total.iter_mut().zip(&v) {
            add_into(t, vi);
        }
    }
    let want = total.iter().map(|vi| mlp(s, "head", vi, a, Activation::Identity)).collect();
    model_case("figconv depth 1", &m, &x, want, 1e-8)
}

// ---- point family ----

pub fn pointnet_case() -> Case {
    let dims = DataDims::new(0, 0, 2);
    let m = Model::build(&small("pointnet", 4, 2), &dims, 20).unwrap();
    let x = input(&mut rng(120), 6, &dims);
    let s = &m.store;
    let a = Activation::Gelu;
    let local: Vec<Vec<f64>> = x.coords.iter().map(|p| mlp(s, "local", p, a, a)).collect();
    let global: Vec<f64> = (0..local[0].len())
        .map(|k| local.iter().map(|l| l[k]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let want = local.iter().map(|l| mlp(s, "head", &cat(l, &global), a, Activation::Identity)).collect();
    model_case("pointnet", &m, &x, want, 1e-10)
}

pub fn gnot_case() -> Case {
    let dims = DataDims::new(0, 0, 1);
    let m = Model::build(&small("gnot", 4, 1), &dims, 21).unwrap();
    let x = input(&mut rng(121), 4, &dims);
    let s = &m.store;
    let a = Activation::Gelu;
    let v: Vec<Vec<f64>> = x.coords.iter().map(|p| dense(s, "embed", p, a)).collect();
    let y = self_attention(s, "attn.0", &v, 1, false);
    let want = y.iter().map(|r| mlp(s, "head", r, a, Activation::Identity)).collect();
    model_case("gnot L=1", &m, &x, want, 1e-10)
}

pub fn transolver_case() -> Case {
    let dims = DataDims::new(0, 0, 1);
    let mut cfg = small("transolver", 4, 1);
    cfg.slices = 2;
    let m = Model::build(&cfg, &dims, 13).unwrap();
    let x = input(&mut rng(113), 5, &dims);
    let s = &m.store;
    let a = Activation::Gelu;
    let v: Vec<Vec<f64>> = x.coords.iter().map(|p| dense(s, "embed", p, a)).collect();
    let w: Vec<Vec<f64>> = v
        .iter()
        .map(|vi| {
            let l = affine(s, "slice", vi);
            let e: Vec<f64> = l.iter().map(|z| z.exp()).collect();
            let z: f64 = e.iter().sum();
            e.iter().map(|u| u / z).collect()
        })
        .collect();
    let h = v[0].len();
    let mut tokens: Vec<Vec<f64>> = (0..2)
        .map(|mm| {
            let den: f64 = w.iter().map(|wi| wi[mm]).sum();
            (0..h).map(|k| w.iter().zip(&v).map(|(wi, vi)| wi[mm] * vi[k]).sum::<f64>() / den).collect()
        })
        .collect();
    let att = self_attention(s, "attn.0", &tokens, 1, false);
    for (t, y) in tokens.iter_mut().zip(&att) {
        add_into(t, y);
    }
    for t in tokens.iter_mut() {
        let f = mlp(s, "ffn.0", t, a, Activation::Identity);
        add_into(t, &f);
    }
    let want = w
        .iter()
        .map(|wi| {
            let u: Vec<f64> = (0..h).map(|k| (0..2).map(|mm| wi[mm] * tokens[mm][k]).sum()).collect();
            mlp(s, "head", &u, a, Activation::Identity)
        })
        .collect();
    model_case("transolver M=2", &m, &x, want, 1e-10)
}

// ---- transfer kernels and enhancements ----

fn pair_maps(s: &mut ParamStore, src: usize, dst: usize, d: usize, seed: u64) -> PairMaps {
    let mut r = rng(seed);
    PairMaps {
        mp: Mlp::new(s, "t.mp", &[src + dst, 4, d], Activation::Gelu, Activation::Identity, &mut r).unwrap(),
        f: Mlp::new(s, "t.f", &[src, d], Activation::Identity, Activation::Identity, &mut r).unwrap(),
    }
}

pub fn points_to_grid_case() -> Case {
    let mut s = ParamStore::new();
    let d = 2;
    let maps = pair_maps(&mut s, d, 3, d, 5);
    let mut r = rng(205);
    let pts = cloud(&mut r, 20);
    let pf: Vec<Vec<f64>> = (0..20).map(|_| uniform(&mut r, d, -1.0, 1.0)).collect();
    let grid = RegularGrid::unit(3).unwrap();
    let nodes = lattice([3, 3, 3], [0.0; 3], [1.0; 3]);
    let nf: Vec<Vec<f64>> = nodes.iter().map(|p| p.to_vec()).collect();
    let rad = 0.4;
    let mut t = Tape::new();
    let pv = t.constant(Tensor::matrix(20, d, flat(&pf)).unwrap());
    let gv = t.constant(Tensor::matrix(27, 3, flat(&nf)).unwrap());
    let y = points_to_grid(&mut t, &s, &pts, pv, &grid, gv, rad, &maps).unwrap();
    let want = dense_transfer(&s, "t", &pts, &pf, &nodes, &nf, rad, Activation::Gelu);
    Case::new("points_to_grid dense pair", max_diff(t.value(y).data(), &flat(&want)), 1e-10)
}

pub fn grid_to_points_case() -> Case {
    let mut s = ParamStore::new();
    let d = 3;
    let maps = pair_maps(&mut s, d, 3, d, 6);
    let mut r = rng(206);
    let grid = RegularGrid::unit(3).unwrap();
    let nodes = lattice([3, 3, 3], [0.0; 3], [1.0; 3]);
    let gf: Vec<Vec<f64>> = (0..27).map(|_| uniform(&mut r, d, -1.0, 1.0)).collect();
    let q = cloud(&mut r, 7);
    let qf: Vec<Vec<f64>> = q.iter().map(|p| p.to_vec()).collect();
    let rad = 0.5;
    let mut t = Tape::new();
    let gv = t.constant(Tensor::matrix(27, d, flat(&gf)).unwrap());
    let qv = t.constant(Tensor::matrix(7, 3, flat(&qf)).unwrap());
    let y = grid_to_points(&mut t, &s, &grid, gv, &q, qv, rad, &maps).unwrap();
    let want = dense_transfer(&s, "t", &nodes, &gf, &q, &qf, rad, Activation::Gelu);
    Case::new("grid_to_points dense pair", max_diff(t.value(y).data(), &flat(&want)), 1e-10)
}

pub fn branch_fuse_case() -> Case {
    let mut s = ParamStore::new();
    let fuse = BranchFuse::new(&mut s, 2, 4, Activation::Gelu, &mut rng(21)).unwrap();
    let p = [0.5, -1.0];
    let feats = uniform(&mut rng(221), 5 * 3, -1.0, 1.0);
    let mut t = Tape::new();
    let fv = t.constant(Tensor::matrix(5, 3, feats.clone()).unwrap());
    let y = branch_fuse(&mut t, &s, fv, Some(&p), &fuse).unwrap();
    let e = mlp(&s, "fuse", &p, Activation::Gelu, Activation::Gelu);
    let want: Vec<Vec<f64>> = feats.chunks(3).map(|row| cat(row, &e)).collect();
    Case::new("branch_fuse", max_diff(t.value(y).data(), &flat(&want)), 1e-12)
}

pub fn voxel_map_case() -> Case {
    let grid = RegularGrid::new([10; 3], [0.0; 3], [1.0; 3]).unwrap();
    let pts = cloud(&mut rng(301), 1000);
    let occ = voxelize(&pts, &grid).unwrap();
    let mut want = vec![0.0; 1000];
    for p in &pts {
        let c = p.map(|v| ((v * 10.0).floor() as usize).min(9));
        want[(c[0] * 10 + c[1]) * 10 + c[2]] = 1.0;
    }
    Case::new("voxelize index map", max_diff(&occ, &want), 0.5)
}

pub fn voxel_shift_case() -> Case {
    let grid = RegularGrid::new([10; 3], [0.0; 3], [1.0; 3]).unwrap();
    let mut r = rng(302);
    let pts: Vec<[f64; 3]> = (0..60)
        .map(|_| {
            let c = [r.random_range(0..9usize), r.random_range(0..10usize), r.random_range(0..10usize)];
            c.map(|k| (k as f64 + 0.5 + r.random_range(-0.3..0.3)) * 0.1)
        })
        .collect();
    let shifted: Vec<[f64; 3]> = pts.iter().map(|p| [p[0] + 0.1, p[1], p[2]]).collect();
    let a = voxelize(&pts, &grid).unwrap();
    let b = voxelize(&shifted, &grid).unwrap();
    let mut bad = 0.0;
    for i in 0..10 {
        for j in 0..10 {
            for k in 0..10 {
                let want = if i == 0 { 0.0 } else { a[((i - 1) * 10 + j) * 10 + k] };
                if b[(i * 10 + j) * 10 + k] != want {
                    bad += 1.0;
                }
            }
        }
    }
    Case::new("voxel shift by one pitch", bad, 0.5)
}

pub fn descriptor_case() -> Case {
    let mut corners = Vec::new();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                corners.push([i as f64, j as f64, k as f64]);
            }
        }
    }
    let v = descriptors(&corners).to_vec();
    let mut err = max_diff(&v[..6], &[0.5, 0.5, 0.5, 1.0, 1.0, 1.0]);
    err = err.max(max_diff(&v[15..18], &[0.25, 0.25, 0.25]));

    let mut pts = lattice([5, 5, 5], [0.0; 3], [1.0; 3]);
    pts.iter_mut().for_each(|p| p[0] *= 2.0);
    let g = descriptors(&pts);
    let n = pts.len() as f64;
    let c: Vec<f64> = (0..3).map(|a| pts.iter().map(|p| p[a]).sum::<f64>() / n).collect();
    let mut cov = [[0.0; 3]; 3];
    for p in &pts {
        for r in 0..3 {
            for q in 0..3 {
                cov[r][q] += (p[r] - c[r]) * (p[q] - c[q]) / n;
            }
        }
    }
    let ax = g.axes[0];
    err = err.max(1.0 - ax[0].abs());
    for r in 0..3 {
        let cv: f64 = (0..3).map(|q| cov[r][q] * ax[q]).sum();
        err = err.max((cv - g.eigenvalues[0] * ax[r]).abs());
    }
    err = err.max((g.eigenvalues[0] - cov[0][0]).abs());
    Case::new("descriptors", err, 1e-9)
}

pub fn brute_radius(cloud: &[[f64; 3]], q: &[[f64; 3]], r: f64) -> Vec<Vec<usize>> {
    q.iter()
        .map(|x| (0..cloud.len()).filter(|&i| d2(&cloud[i], x) <= r * r).collect())
        .collect()
}

pub fn brute_knn(cloud: &[[f64; 3]], k: usize) -> Vec<Vec<usize>> {
    (0..cloud.len())
        .map(|i| {
            let mut o: Vec<usize> = (0..cloud.len()).filter(|&j| j != i).collect();
            o.sort_by(|&a, &b| d2(&cloud[a], &cloud[i]).total_cmp(&d2(&cloud[b], &cloud[i])).then(a.cmp(&b)));
            o.truncate(k);
            o
        })
        .collect()
}

/// Number of queries whose neighbor set differs from the brute-force scan.
pub fn radius_mismatches(cloud: &[[f64; 3]], q: &[[f64; 3]], r: f64) -> usize {
    let g = radius_neighbors(cloud, q, r).unwrap();
    let want = brute_radius(cloud, q, r);
    (0..q.len())
        .filter(|&i| {
            let mut got = g.neighbors(i).to_vec();
            got.sort_unstable();
            got != want[i]
        })
        .count()
}

pub fn knn_mismatches(cloud: &[[f64; 3]], k: usize) -> usize {
    let g = knn_neighbors(cloud, k).unwrap();
    let want = brute_knn(cloud, k);
    (0..cloud.len()).filter(|&i| g.neighbors(i) != want[i].as_slice()).count()
}

pub fn radius_case() -> Case {
    let pts = cloud(&mut rng(401), 200);
    Case::new("radius r=0.2 vs brute force", radius_mismatches(&pts, &pts, 0.2) as f64, 0.5)
}

pub fn knn_case() -> Case {
    let pts = cloud(&mut rng(402), 100);
    Case::new("knn k=8 vs brute force", knn_mismatches(&pts, 8) as f64, 0.5)
}
