//! Differentiable tensor operations.
//!
//! Each op computes its output eagerly and, when the tape is recording
//! and an input requires grad, pushes a backprop closure. Binary ops
//! broadcast numpy-style over equal-rank shapes (a dimension may be 1
//! on one side); gradients for broadcast inputs are sum-reduced back.

use super::{Scalar, Shape, Tape, Tensor};
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// broadcast machinery
// ---------------------------------------------------------------------------

fn broadcast_out_dims(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    if a.len() != b.len() {
        return Err(Error::shape(format!(
            "broadcast rank mismatch: {} vs {}",
            Shape(a.to_vec()),
            Shape(b.to_vec())
        )));
    }
    a.iter()
        .zip(b)
        .map(|(&da, &db)| {
            if da == db || da == 1 || db == 1 {
                Ok(da.max(db))
            } else {
                Err(Error::shape(format!(
                    "cannot broadcast {} with {}",
                    Shape(a.to_vec()),
                    Shape(b.to_vec())
                )))
            }
        })
        .collect()
}

fn contiguous_strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![0usize; dims.len()];
    let mut acc = 1usize;
    for d in (0..dims.len()).rev() {
        s[d] = acc;
        acc *= dims[d];
    }
    s
}

/// Strides for reading `dims` as if expanded to `out_dims` (0 where
/// the dimension is broadcast).
fn bcast_strides(dims: &[usize], out_dims: &[usize]) -> Vec<usize> {
    let nat = contiguous_strides(dims);
    dims.iter()
        .zip(out_dims)
        .zip(nat)
        .map(|((&d, &od), s)| if d == od { s } else { debug_assert_eq!(d, 1); 0 })
        .collect()
}

/// Visit every position of `out_dims` in row-major order, yielding the
/// flat offsets into two broadcast operands.
fn for_each_broadcast2(
    out_dims: &[usize],
    a_str: &[usize],
    b_str: &[usize],
    mut f: impl FnMut(usize, usize),
) {
    let rank = out_dims.len();
    let total: usize = out_dims.iter().product();
    let mut idx = vec![0usize; rank];
    let (mut a_off, mut b_off) = (0usize, 0usize);
    for _ in 0..total {
        f(a_off, b_off);
        for d in (0..rank).rev() {
            idx[d] += 1;
            a_off += a_str[d];
            b_off += b_str[d];
            if idx[d] < out_dims[d] {
                break;
            }
            a_off -= a_str[d] * out_dims[d];
            b_off -= b_str[d] * out_dims[d];
            idx[d] = 0;
        }
    }
}

fn binary_broadcast<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>> {
    if a.dims() == b.dims() {
        let ad = a.data();
        let bd = b.data();
        let out: Vec<T> = ad.iter().zip(bd.iter()).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::from_vec(a.shape().clone(), out);
    }
    let out_dims = broadcast_out_dims(a.dims(), b.dims())?;
    let a_str = bcast_strides(a.dims(), &out_dims);
    let b_str = bcast_strides(b.dims(), &out_dims);
    let ad = a.data();
    let bd = b.data();
    let mut out = Vec::with_capacity(out_dims.iter().product());
    for_each_broadcast2(&out_dims, &a_str, &b_str, |ia, ib| out.push(f(ad[ia], bd[ib])));
    Tensor::from_vec(Shape(out_dims), out)
}

/// Reduce an output-shaped gradient back onto the (possibly broadcast)
/// input shape by summation.
fn reduce_grad_to<T: Scalar>(g: &[T], out_dims: &[usize], in_dims: &[usize]) -> Vec<T> {
    if out_dims == in_dims {
        return g.to_vec();
    }
    let in_str = bcast_strides(in_dims, out_dims);
    let zero_str = vec![0usize; out_dims.len()];
    let mut acc = vec![T::zero(); in_dims.iter().product()];
    let mut flat = 0usize;
    for_each_broadcast2(out_dims, &in_str, &zero_str, |ia, _| {
        acc[ia] = acc[ia] + g[flat];
        flat += 1;
    });
    acc
}

// ---------------------------------------------------------------------------
// elementwise binary
// ---------------------------------------------------------------------------

macro_rules! binary_op {
    ($name:ident, $fwd:expr, $bwd_a:expr, $bwd_b:expr) => {
        pub fn $name<T: Scalar>(tape: &Tape<T>, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
            let out = binary_broadcast(a, b, $fwd)?;
            if tape.should_record(&[a, b]) {
                let (ac, bc, oc) = (a.clone(), b.clone(), out.clone());
                let out_dims = out.dims().to_vec();
                tape.push(
                    &out,
                    Box::new(move |g| {
                        if ac.requires_grad() {
                            let contrib = $bwd_a(g, &ac, &bc, &oc);
                            ac.accum_grad(&reduce_grad_to(&contrib, &out_dims, ac.dims()));
                        }
                        if bc.requires_grad() {
                            let contrib = $bwd_b(g, &ac, &bc, &oc);
                            bc.accum_grad(&reduce_grad_to(&contrib, &out_dims, bc.dims()));
                        }
                    }),
                );
            }
            Ok(out)
        }
    };
}

/// Expand a tensor's data to the given broadcast shape.
fn expand_to<T: Scalar>(t: &Tensor<T>, out_dims: &[usize]) -> Vec<T> {
    let str_ = bcast_strides(t.dims(), out_dims);
    let zero = vec![0usize; out_dims.len()];
    let d = t.data();
    let mut out = Vec::with_capacity(out_dims.iter().product());
    for_each_broadcast2(out_dims, &str_, &zero, |ia, _| out.push(d[ia]));
    out
}

binary_op!(
    add,
    |x, y| x + y,
    |g: &[T], _a: &Tensor<T>, _b: &Tensor<T>, _o: &Tensor<T>| g.to_vec(),
    |g: &[T], _a: &Tensor<T>, _b: &Tensor<T>, _o: &Tensor<T>| g.to_vec()
);

binary_op!(
    sub,
    |x, y| x - y,
    |g: &[T], _a: &Tensor<T>, _b: &Tensor<T>, _o: &Tensor<T>| g.to_vec(),
    |g: &[T], _a: &Tensor<T>, _b: &Tensor<T>, _o: &Tensor<T>| g
        .iter()
        .map(|&x| T::zero() - x)
        .collect::<Vec<T>>()
);

binary_op!(
    mul,
    |x, y| x * y,
    |g: &[T], _a: &Tensor<T>, b: &Tensor<T>, o: &Tensor<T>| {
        let be = expand_to(b, o.dims());
        g.iter().zip(be).map(|(&gi, bv)| gi * bv).collect::<Vec<T>>()
    },
    |g: &[T], a: &Tensor<T>, _b: &Tensor<T>, o: &Tensor<T>| {
        let ae = expand_to(a, o.dims());
        g.iter().zip(ae).map(|(&gi, av)| gi * av).collect::<Vec<T>>()
    }
);

binary_op!(
    div,
    |x, y| x / y,
    |g: &[T], _a: &Tensor<T>, b: &Tensor<T>, o: &Tensor<T>| {
        let be = expand_to(b, o.dims());
        g.iter().zip(be).map(|(&gi, bv)| gi / bv).collect::<Vec<T>>()
    },
    |g: &[T], a: &Tensor<T>, b: &Tensor<T>, o: &Tensor<T>| {
        let ae = expand_to(a, o.dims());
        let be = expand_to(b, o.dims());
        g.iter()
            .zip(ae)
            .zip(be)
            .map(|((&gi, av), bv)| T::zero() - gi * av / (bv * bv))
            .collect::<Vec<T>>()
    }
);

// ---------------------------------------------------------------------------
// elementwise unary
// ---------------------------------------------------------------------------

fn unary<T: Scalar>(
    tape: &Tape<T>,
    x: &Tensor<T>,
    fwd: impl Fn(T) -> T,
    bwd: impl Fn(T /*x*/, T /*y*/) -> T + 'static,
) -> Tensor<T> {
    let out_data: Vec<T> = x.data().iter().map(|&v| fwd(v)).collect();
    let out = Tensor::from_vec(x.shape().clone(), out_data).expect("same shape");
    if tape.should_record(&[x]) {
        let (xc, oc) = (x.clone(), out.clone());
        tape.push(
            &out,
            Box::new(move |g| {
                let xd = xc.data();
                let od = oc.data();
                let contrib: Vec<T> = g
                    .iter()
                    .zip(xd.iter().zip(od.iter()))
                    .map(|(&gi, (&xi, &yi))| gi * bwd(xi, yi))
                    .collect();
                drop(xd);
                xc.accum_grad(&contrib);
            }),
        );
    }
    out
}

pub fn relu<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>) -> Tensor<T> {
    unary(
        tape,
        x,
        |v| if v > T::zero() { v } else { T::zero() },
        |xi, _| if xi > T::zero() { T::one() } else { T::zero() },
    )
}

pub fn sigmoid<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>) -> Tensor<T> {
    unary(
        tape,
        x,
        |v| T::one() / (T::one() + (T::zero() - v).exp()),
        |_, yi| yi * (T::one() - yi),
    )
}

pub fn exp<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>) -> Tensor<T> {
    unary(tape, x, |v| v.exp(), |_, yi| yi)
}

/// Natural log. The whole input must be strictly positive; callers
/// clamp depths first.
pub fn log<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    if let Some(&bad) = x.data().iter().find(|v| **v <= T::zero()) {
        return Err(Error::numeric(format!("log of non-positive value {bad}")));
    }
    Ok(unary(tape, x, |v| v.ln(), |xi, _| T::one() / xi))
}

pub fn sqrt<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    if let Some(&bad) = x.data().iter().find(|v| **v < T::zero()) {
        return Err(Error::numeric(format!("sqrt of negative value {bad}")));
    }
    let two = T::from_f64(2.0);
    Ok(unary(
        tape,
        x,
        |v| v.sqrt(),
        move |_, yi| if yi > T::zero() { T::one() / (two * yi) } else { T::zero() },
    ))
}

pub fn neg<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>) -> Tensor<T> {
    unary(tape, x, |v| T::zero() - v, |_, _| T::zero() - T::one())
}

pub fn scale<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>, c: T) -> Tensor<T> {
    unary(tape, x, |v| v * c, move |_, _| c)
}

pub fn add_scalar<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>, c: T) -> Tensor<T> {
    unary(tape, x, |v| v + c, |_, _| T::one())
}

/// max(x, c) with subgradient 0 at and below the clamp point.
pub fn clamp_min<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>, c: T) -> Tensor<T> {
    unary(
        tape,
        x,
        move |v| if v > c { v } else { c },
        move |xi, _| if xi > c { T::one() } else { T::zero() },
    )
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

pub fn sum_all<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let mut acc = T::zero();
    for &v in x.data().iter() {
        acc = acc + v;
    }
    let out = Tensor::scalar(acc);
    if tape.should_record(&[x]) {
        let xc = x.clone();
        tape.push(
            &out,
            Box::new(move |g| {
                let contrib = vec![g[0]; xc.numel()];
                xc.accum_grad(&contrib);
            }),
        );
    }
    Ok(out)
}

pub fn mean_all<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let n = T::from_f64(x.numel() as f64);
    let s = sum_all(tape, x)?;
    Ok(scale(tape, &s, T::one() / n))
}

/// Sum over one axis, keeping it as size 1.
pub fn reduce_sum<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let dims = x.dims();
    if axis >= dims.len() {
        return Err(Error::shape(format!("reduce axis {axis} out of range for {}", x.shape())));
    }
    let axis_len = dims[axis];
    let inner: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let xd = x.data();
    let mut out = vec![T::zero(); outer * inner];
    for o in 0..outer {
        for a in 0..axis_len {
            let base = (o * axis_len + a) * inner;
            let obase = o * inner;
            for i in 0..inner {
                out[obase + i] = out[obase + i] + xd[base + i];
            }
        }
    }
    drop(xd);
    let mut out_dims = dims.to_vec();
    out_dims[axis] = 1;
    let out = Tensor::from_vec(Shape(out_dims), out)?;
    if tape.should_record(&[x]) {
        let xc = x.clone();
        tape.push(
            &out,
            Box::new(move |g| {
                let mut contrib = vec![T::zero(); xc.numel()];
                for o in 0..outer {
                    for a in 0..axis_len {
                        let base = (o * axis_len + a) * inner;
                        let gbase = o * inner;
                        for i in 0..inner {
                            contrib[base + i] = g[gbase + i];
                        }
                    }
                }
                xc.accum_grad(&contrib);
            }),
        );
    }
    Ok(out)
}

pub fn reduce_mean<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let n = T::from_f64(x.dims()[axis] as f64);
    let s = reduce_sum(tape, x, axis)?;
    Ok(scale(tape, &s, T::one() / n))
}

/// Mean over several axes (kept as size 1), e.g. batch statistics.
pub fn mean_axes<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>, axes: &[usize]) -> Result<Tensor<T>> {
    let mut cur = x.clone();
    for &a in axes {
        cur = reduce_mean(tape, &cur, a)?;
    }
    Ok(cur)
}

/// sum(x*x) as a scalar.
pub fn sum_sq<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let sq = mul(tape, x, x)?;
    sum_all(tape, &sq)
}

// ---------------------------------------------------------------------------
// shape ops (all copy)
// ---------------------------------------------------------------------------

pub fn reshape<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>, dims: impl Into<Shape>) -> Result<Tensor<T>> {
    let shape = dims.into();
    if shape.numel() != x.numel() {
        return Err(Error::shape(format!(
            "cannot reshape {} into {}",
            x.shape(),
            shape
        )));
    }
    let out = Tensor::from_vec(shape, x.to_vec())?;
    if tape.should_record(&[x]) {
        let xc = x.clone();
        tape.push(&out, Box::new(move |g| xc.accum_grad(g)));
    }
    Ok(out)
}

pub(crate) fn transpose_raw<T: Scalar>(a: &[T], m: usize, n: usize, out: &mut [T]) {
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
}

pub fn transpose2d<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let [m, n] = match x.dims() {
        &[m, n] => [m, n],
        _ => return Err(Error::shape(format!("transpose2d expects rank 2, got {}", x.shape()))),
    };
    let mut out = vec![T::zero(); m * n];
    transpose_raw(&x.data(), m, n, &mut out);
    let out = Tensor::from_vec([n, m], out)?;
    if tape.should_record(&[x]) {
        let xc = x.clone();
        tape.push(
            &out,
            Box::new(move |g| {
                let mut back = vec![T::zero(); m * n];
                transpose_raw(g, n, m, &mut back);
                xc.accum_grad(&back);
            }),
        );
    }
    Ok(out)
}

/// Concatenate along `axis`; inputs must agree on every other dim.
pub fn concat<T: Scalar>(tape: &Tape<T>, axis: usize, parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    if parts.is_empty() {
        return Err(Error::shape("concat of zero tensors".to_string()));
    }
    let rank = parts[0].rank();
    if axis >= rank {
        return Err(Error::shape(format!("concat axis {axis} out of range")));
    }
    let mut out_dims = parts[0].dims().to_vec();
    out_dims[axis] = 0;
    for p in parts {
        if p.rank() != rank {
            return Err(Error::shape(format!(
                "concat rank mismatch: {} vs {}",
                parts[0].shape(),
                p.shape()
            )));
        }
        for (d, (&a, &b)) in parts[0].dims().iter().zip(p.dims()).enumerate() {
            if d != axis && a != b {
                return Err(Error::shape(format!(
                    "concat dim {d} mismatch: {} vs {}",
                    parts[0].shape(),
                    p.shape()
                )));
            }
        }
        out_dims[axis] += p.dims()[axis];
    }
    let outer: usize = out_dims[..axis].iter().product();
    let inner: usize = out_dims[axis + 1..].iter().product();
    let total_axis = out_dims[axis];
    let mut out = vec![T::zero(); outer * total_axis * inner];
    let mut offset = 0usize;
    let mut spans = Vec::with_capacity(parts.len());
    for p in parts {
        let alen = p.dims()[axis];
        let pd = p.data();
        for o in 0..outer {
            let src = o * alen * inner;
            let dst = (o * total_axis + offset) * inner;
            out[dst..dst + alen * inner].copy_from_slice(&pd[src..src + alen * inner]);
        }
        spans.push((offset, alen));
        offset += alen;
    }
    let out = Tensor::from_vec(Shape(out_dims), out)?;
    let refs: Vec<&Tensor<T>> = parts.to_vec();
    if tape.should_record(&refs) {
        let owned: Vec<Tensor<T>> = parts.iter().map(|p| (*p).clone()).collect();
        tape.push(
            &out,
            Box::new(move |g| {
                for (p, &(off, alen)) in owned.iter().zip(&spans) {
                    if !p.requires_grad() {
                        continue;
                    }
                    let mut contrib = vec![T::zero(); p.numel()];
                    for o in 0..outer {
                        let dst = o * alen * inner;
                        let src = (o * total_axis + off) * inner;
                        contrib[dst..dst + alen * inner].copy_from_slice(&g[src..src + alen * inner]);
                    }
                    p.accum_grad(&contrib);
                }
            }),
        );
    }
    Ok(out)
}

/// Copy `len` entries along `axis` starting at `start`.
pub fn narrow<T: Scalar>(
    tape: &Tape<T>,
    x: &Tensor<T>,
    axis: usize,
    start: usize,
    len: usize,
) -> Result<Tensor<T>> {
    let dims = x.dims();
    if axis >= dims.len() || start + len > dims[axis] {
        return Err(Error::shape(format!(
            "narrow axis {axis} [{start}..{}) out of range for {}",
            start + len,
            x.shape()
        )));
    }
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    let alen = dims[axis];
    let xd = x.data();
    let mut out = vec![T::zero(); outer * len * inner];
    for o in 0..outer {
        let src = (o * alen + start) * inner;
        let dst = o * len * inner;
        out[dst..dst + len * inner].copy_from_slice(&xd[src..src + len * inner]);
    }
    drop(xd);
    let mut out_dims = dims.to_vec();
    out_dims[axis] = len;
    let out = Tensor::from_vec(Shape(out_dims), out)?;
    if tape.should_record(&[x]) {
        let xc = x.clone();
        tape.push(
            &out,
            Box::new(move |g| {
                let mut contrib = vec![T::zero(); xc.numel()];
                for o in 0..outer {
                    let dst = (o * alen + start) * inner;
                    let src = o * len * inner;
                    contrib[dst..dst + len * inner].copy_from_slice(&g[src..src + len * inner]);
                }
                xc.accum_grad(&contrib);
            }),
        );
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

/// c += a[m,k] * b[k,n], row-major, fixed accumulation order (ascending
/// k per output element).
pub(crate) fn mm_accum<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, c: &mut [T]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + av * bv;
            }
        }
    }
}

pub fn matmul<T: Scalar>(tape: &Tape<T>, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = match a.dims() {
        &[m, k] => (m, k),
        _ => return Err(Error::shape(format!("matmul lhs must be rank 2, got {}", a.shape()))),
    };
    let (k2, n) = match b.dims() {
        &[k2, n] => (k2, n),
        _ => return Err(Error::shape(format!("matmul rhs must be rank 2, got {}", b.shape()))),
    };
    if k != k2 {
        return Err(Error::shape(format!(
            "matmul inner dims differ: {} vs {}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = vec![T::zero(); m * n];
    mm_accum(&a.data(), &b.data(), m, k, n, &mut out);
    let out = Tensor::from_vec([m, n], out)?;
    if tape.should_record(&[a, b]) {
        let (ac, bc) = (a.clone(), b.clone());
        tape.push(
            &out,
            Box::new(move |g| {
                if ac.requires_grad() {
                    // dA = g . B^T
                    let mut bt = vec![T::zero(); k * n];
                    transpose_raw(&bc.data(), k, n, &mut bt);
                    let mut da = vec![T::zero(); m * k];
                    mm_accum(g, &bt, m, n, k, &mut da);
                    ac.accum_grad(&da);
                }
                if bc.requires_grad() {
                    // dB = A^T . g
                    let mut at = vec![T::zero(); m * k];
                    transpose_raw(&ac.data(), m, k, &mut at);
                    let mut db = vec![T::zero(); k * n];
                    mm_accum(&at, g, k, m, n, &mut db);
                    bc.accum_grad(&db);
                }
            }),
        );
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// convolution and pooling
// ---------------------------------------------------------------------------

fn conv_out_len(sz: usize, k: usize, stride: usize, pad: usize) -> usize {
    (sz + 2 * pad - k) / stride + 1
}

fn im2col<T: Scalar>(
    x: &[T],
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    cols: &mut [T],
) {
    // cols layout: [c_in*k*k, oh*ow]
    let pixels = oh * ow;
    for ci in 0..c_in {
        for dy in 0..k {
            for dx in 0..k {
                let row = ((ci * k + dy) * k + dx) * pixels;
                for oy in 0..oh {
                    let iy = (oy * stride + dy) as isize - pad as isize;
                    let rbase = row + oy * ow;
                    if iy < 0 || iy >= h as isize {
                        for v in &mut cols[rbase..rbase + ow] {
                            *v = T::zero();
                        }
                        continue;
                    }
                    let xrow = (ci * h + iy as usize) * w;
                    for ox in 0..ow {
                        let ix = (ox * stride + dx) as isize - pad as isize;
                        cols[rbase + ox] = if ix < 0 || ix >= w as isize {
                            T::zero()
                        } else {
                            x[xrow + ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im_accum<T: Scalar>(
    cols: &[T],
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    x: &mut [T],
) {
    let pixels = oh * ow;
    for ci in 0..c_in {
        for dy in 0..k {
            for dx in 0..k {
                let row = ((ci * k + dy) * k + dx) * pixels;
                for oy in 0..oh {
                    let iy = (oy * stride + dy) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let xrow = (ci * h + iy as usize) * w;
                    let rbase = row + oy * ow;
                    for ox in 0..ow {
                        let ix = (ox * stride + dx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            let xi = xrow + ix as usize;
                            x[xi] = x[xi] + cols[rbase + ox];
                        }
                    }
                }
            }
        }
    }
}

/// 2D convolution. `x` is `[N,C_in,H,W]` (rank 3 is treated as a batch
/// of one), `w` is `[C_out,C_in,k,k]` with odd `k`.
pub fn conv2d<T: Scalar>(
    tape: &Tape<T>,
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (squeeze, n, c_in, h, ww) = match x.dims() {
        &[c, h, w_] => (true, 1usize, c, h, w_),
        &[n, c, h, w_] => (false, n, c, h, w_),
        _ => return Err(Error::shape(format!("conv2d input must be rank 3 or 4, got {}", x.shape()))),
    };
    let (c_out, wc_in, k, k2) = match w.dims() {
        &[o, i, k, k2] => (o, i, k, k2),
        _ => return Err(Error::shape(format!("conv2d weight must be rank 4, got {}", w.shape()))),
    };
    if k != k2 || k % 2 == 0 {
        return Err(Error::config(format!("conv2d kernel must be square and odd, got {k}x{k2}")));
    }
    if stride == 0 {
        return Err(Error::config("conv2d stride must be >= 1".to_string()));
    }
    if wc_in != c_in {
        return Err(Error::shape(format!(
            "conv2d channel mismatch: input {} vs weight {}",
            x.shape(),
            w.shape()
        )));
    }
    if h + 2 * pad < k || ww + 2 * pad < k {
        return Err(Error::config(format!(
            "conv2d padded input {}x{} smaller than kernel {k}",
            h + 2 * pad,
            ww + 2 * pad
        )));
    }
    if let Some(b) = bias {
        if b.dims() != [c_out] {
            return Err(Error::shape(format!(
                "conv2d bias must be [{c_out}], got {}",
                b.shape()
            )));
        }
    }
    let oh = conv_out_len(h, k, stride, pad);
    let ow = conv_out_len(ww, k, stride, pad);
    let ck = c_in * k * k;
    let pixels = oh * ow;

    let xd = x.data();
    let wd = w.data();
    let mut cols_all = vec![T::zero(); n * ck * pixels];
    let mut out = vec![T::zero(); n * c_out * pixels];
    for s in 0..n {
        let cols = &mut cols_all[s * ck * pixels..(s + 1) * ck * pixels];
        im2col(&xd[s * c_in * h * ww..(s + 1) * c_in * h * ww], c_in, h, ww, k, stride, pad, oh, ow, cols);
        mm_accum(&wd, cols, c_out, ck, pixels, &mut out[s * c_out * pixels..(s + 1) * c_out * pixels]);
    }
    if let Some(b) = bias {
        let bd = b.data();
        for s in 0..n {
            for co in 0..c_out {
                let base = (s * c_out + co) * pixels;
                let bv = bd[co];
                for v in &mut out[base..base + pixels] {
                    *v = *v + bv;
                }
            }
        }
    }
    drop(xd);
    drop(wd);

    let out_shape: Shape = if squeeze {
        [c_out, oh, ow].into()
    } else {
        [n, c_out, oh, ow].into()
    };
    let out = Tensor::from_vec(out_shape, out)?;

    let mut tracked: Vec<&Tensor<T>> = vec![x, w];
    if let Some(b) = bias {
        tracked.push(b);
    }
    if tape.should_record(&tracked) {
        let (xc, wc) = (x.clone(), w.clone());
        let bc = bias.cloned();
        tape.push(
            &out,
            Box::new(move |g| {
                if wc.requires_grad() {
                    let mut dw = vec![T::zero(); c_out * ck];
                    let mut colst = vec![T::zero(); ck * pixels];
                    for s in 0..n {
                        let cols = &cols_all[s * ck * pixels..(s + 1) * ck * pixels];
                        transpose_raw(cols, ck, pixels, &mut colst);
                        mm_accum(&g[s * c_out * pixels..(s + 1) * c_out * pixels], &colst, c_out, pixels, ck, &mut dw);
                    }
                    wc.accum_grad(&dw);
                }
                if let Some(b) = &bc {
                    if b.requires_grad() {
                        let mut db = vec![T::zero(); c_out];
                        for s in 0..n {
                            for co in 0..c_out {
                                let base = (s * c_out + co) * pixels;
                                for &gv in &g[base..base + pixels] {
                                    db[co] = db[co] + gv;
                                }
                            }
                        }
                        b.accum_grad(&db);
                    }
                }
                if xc.requires_grad() {
                    let wd = wc.data();
                    let mut wt = vec![T::zero(); ck * c_out];
                    transpose_raw(&wd, c_out, ck, &mut wt);
                    drop(wd);
                    let mut dx = vec![T::zero(); n * c_in * h * ww];
                    let mut dcols = vec![T::zero(); ck * pixels];
                    for s in 0..n {
                        dcols.iter_mut().for_each(|v| *v = T::zero());
                        mm_accum(&wt, &g[s * c_out * pixels..(s + 1) * c_out * pixels], ck, c_out, pixels, &mut dcols);
                        col2im_accum(
                            &dcols,
                            c_in,
                            h,
                            ww,
                            k,
                            stride,
                            pad,
                            oh,
                            ow,
                            &mut dx[s * c_in * h * ww..(s + 1) * c_in * h * ww],
                        );
                    }
                    xc.accum_grad(&dx);
                }
            }),
        );
    }
    Ok(out)
}

/// Per-channel spatial mean: `[N,C,H,W] -> [N,C,1,1]` (rank 3 in, rank
/// 3 out with 1x1 spatial).
pub fn avgpool_global<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let (squeeze, n, c, h, w) = match x.dims() {
        &[c, h, w] => (true, 1usize, c, h, w),
        &[n, c, h, w] => (false, n, c, h, w),
        _ => return Err(Error::shape(format!("avgpool input must be rank 3 or 4, got {}", x.shape()))),
    };
    let hw = h * w;
    let inv = T::one() / T::from_f64(hw as f64);
    let xd = x.data();
    let mut out = vec![T::zero(); n * c];
    for nc in 0..n * c {
        let mut acc = T::zero();
        for &v in &xd[nc * hw..(nc + 1) * hw] {
            acc = acc + v;
        }
        out[nc] = acc * inv;
    }
    drop(xd);
    let out_shape: Shape = if squeeze { [c, 1, 1].into() } else { [n, c, 1, 1].into() };
    let out = Tensor::from_vec(out_shape, out)?;
    if tape.should_record(&[x]) {
        let xc = x.clone();
        tape.push(
            &out,
            Box::new(move |g| {
                let mut contrib = vec![T::zero(); n * c * hw];
                for nc in 0..n * c {
                    let gv = g[nc] * inv;
                    for v in &mut contrib[nc * hw..(nc + 1) * hw] {
                        *v = gv;
                    }
                }
                xc.accum_grad(&contrib);
            }),
        );
    }
    Ok(out)
}

/// Nearest-neighbor upsampling by an integer factor.
pub fn upsample_nearest<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let (squeeze, n, c, h, w) = match x.dims() {
        &[c, h, w] => (true, 1usize, c, h, w),
        &[n, c, h, w] => (false, n, c, h, w),
        _ => return Err(Error::shape(format!("upsample input must be rank 3 or 4, got {}", x.shape()))),
    };
    if factor == 0 {
        return Err(Error::config("upsample factor must be >= 1".to_string()));
    }
    let (oh, ow) = (h * factor, w * factor);
    let xd = x.data();
    let mut out = vec![T::zero(); n * c * oh * ow];
    for nc in 0..n * c {
        let src = nc * h * w;
        let dst = nc * oh * ow;
        for oy in 0..oh {
            let iy = oy / factor;
            for ox in 0..ow {
                out[dst + oy * ow + ox] = xd[src + iy * w + ox / factor];
            }
        }
    }
    drop(xd);
    let out_shape: Shape = if squeeze { [c, oh, ow].into() } else { [n, c, oh, ow].into() };
    let out = Tensor::from_vec(out_shape, out)?;
    if tape.should_record(&[x]) {
        let xc = x.clone();
        tape.push(
            &out,
            Box::new(move |g| {
                let mut contrib = vec![T::zero(); n * c * h * w];
                for nc in 0..n * c {
                    let src = nc * oh * ow;
                    let dst = nc * h * w;
                    for oy in 0..oh {
                        let iy = oy / factor;
                        for ox in 0..ow {
                            let di = dst + iy * w + ox / factor;
                            contrib[di] = contrib[di] + g[src + oy * ow + ox];
                        }
                    }
                }
                xc.accum_grad(&contrib);
            }),
        );
    }
    Ok(out)
}

/// Nearest-neighbor resize to an arbitrary spatial size.
pub fn resize_nearest<T: Scalar>(
    tape: &Tape<T>,
    x: &Tensor<T>,
    oh: usize,
    ow: usize,
) -> Result<Tensor<T>> {
    let (squeeze, n, c, h, w) = match x.dims() {
        &[c, h, w] => (true, 1usize, c, h, w),
        &[n, c, h, w] => (false, n, c, h, w),
        _ => return Err(Error::shape(format!("resize input must be rank 3 or 4, got {}", x.shape()))),
    };
    if oh == 0 || ow == 0 {
        return Err(Error::config("resize target must be positive".to_string()));
    }
    if (h, w) == (oh, ow) {
        // Still a copy so the graph stays uniform.
        return reshape(tape, x, x.shape().clone());
    }
    let xd = x.data();
    let mut out = vec![T::zero(); n * c * oh * ow];
    for nc in 0..n * c {
        let src = nc * h * w;
        let dst = nc * oh * ow;
        for oy in 0..oh {
            let iy = oy * h / oh;
            for ox in 0..ow {
                out[dst + oy * ow + ox] = xd[src + iy * w + ox * w / ow];
            }
        }
    }
    drop(xd);
    let out_shape: Shape = if squeeze { [c, oh, ow].into() } else { [n, c, oh, ow].into() };
    let out = Tensor::from_vec(out_shape, out)?;
    if tape.should_record(&[x]) {
        let xc = x.clone();
        tape.push(
            &out,
            Box::new(move |g| {
                let mut contrib = vec![T::zero(); n * c * h * w];
                for nc in 0..n * c {
                    let src = nc * oh * ow;
                    let dst = nc * h * w;
                    for oy in 0..oh {
                        let iy = oy * h / oh;
                        for ox in 0..ow {
                            let di = dst + iy * w + ox * w / ow;
                            contrib[di] = contrib[di] + g[src + oy * ow + ox];
                        }
                    }
                }
                xc.accum_grad(&contrib);
            }),
        );
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// softmax
// ---------------------------------------------------------------------------

/// Numerically stable softmax along `axis` (max subtraction).
pub fn softmax<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let dims = x.dims();
    if axis >= dims.len() {
        return Err(Error::shape(format!("softmax axis {axis} out of range for {}", x.shape())));
    }
    let axis_len = dims[axis];
    let inner: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let xd = x.data();
    let mut out = vec![T::zero(); xd.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * axis_len * inner + i;
            let mut mx = xd[base];
            for a in 1..axis_len {
                let v = xd[base + a * inner];
                if v > mx {
                    mx = v;
                }
            }
            let mut denom = T::zero();
            for a in 0..axis_len {
                let e = (xd[base + a * inner] - mx).exp();
                out[base + a * inner] = e;
                denom = denom + e;
            }
            for a in 0..axis_len {
                out[base + a * inner] = out[base + a * inner] / denom;
            }
        }
    }
    drop(xd);
    let out = Tensor::from_vec(x.shape().clone(), out)?;
    if tape.should_record(&[x]) {
        let (xc, oc) = (x.clone(), out.clone());
        tape.push(
            &out,
            Box::new(move |g| {
                let y = oc.data();
                let mut contrib = vec![T::zero(); y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let base = o * axis_len * inner + i;
                        let mut dot = T::zero();
                        for a in 0..axis_len {
                            let p = base + a * inner;
                            dot = dot + g[p] * y[p];
                        }
                        for a in 0..axis_len {
                            let p = base + a * inner;
                            contrib[p] = y[p] * (g[p] - dot);
                        }
                    }
                }
                drop(y);
                xc.accum_grad(&contrib);
            }),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t64(dims: impl Into<Shape>, v: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(dims, v).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let tape = Tape::inference();
        let i2 = t64([2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let out = matmul(&tape, &i2, &i2).unwrap();
        assert_eq!(out.to_vec(), vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn matmul_hand_case() {
        let tape = Tape::inference();
        let a = t64([2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = t64([2, 1], vec![1.0, 1.0]);
        let out = matmul(&tape, &a, &b).unwrap();
        assert_eq!(out.dims(), &[2, 1]);
        assert_eq!(out.to_vec(), vec![3.0, 7.0]);
    }

    #[test]
    fn matmul_grad_of_sum_is_ones_bt() {
        // d/dA sum(A.B) = ones(m,n) . B^T
        let tape = Tape::new();
        let a = t64([2, 3], vec![0.5, -1.0, 2.0, 1.5, 0.0, -0.5]).requires_grad_(true);
        let b = t64([3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let c = matmul(&tape, &a, &b).unwrap();
        let loss = sum_all(&tape, &c).unwrap();
        tape.backward(&loss).unwrap();
        // ones(2x2) . B^T: row i of grad = column sums pattern [b00+b01, b10+b11, b20+b21]
        let expect = vec![3.0, 7.0, 11.0, 3.0, 7.0, 11.0];
        assert_eq!(a.grad().unwrap(), expect);
    }

    #[test]
    fn matmul_shape_error_names_both() {
        let tape = Tape::<f64>::inference();
        let a = t64([2, 3], vec![0.0; 6]);
        let b = t64([2, 2], vec![0.0; 4]);
        let err = matmul(&tape, &a, &b).unwrap_err().to_string();
        assert!(err.contains("[2x3]") && err.contains("[2x2]"), "{err}");
    }

    #[test]
    fn conv2d_ones_center_is_nine() {
        let tape = Tape::inference();
        let x = t64([1, 3, 3], vec![1.0; 9]);
        let w = t64([1, 1, 3, 3], vec![1.0; 9]);
        let out = conv2d(&tape, &x, &w, None, 1, 1).unwrap();
        assert_eq!(out.dims(), &[1, 3, 3]);
        let d = out.to_vec();
        assert_eq!(d[4], 9.0);
        assert_eq!(d[0], 4.0); // corner
        assert_eq!(d[1], 6.0); // edge
    }

    #[test]
    fn conv2d_dirac_kernel_is_identity() {
        let tape = Tape::inference();
        let x = t64([1, 4, 5], (0..20).map(|i| i as f64 * 0.37 - 2.0).collect());
        let mut w = vec![0.0; 9];
        w[4] = 1.0; // center tap
        let w = t64([1, 1, 3, 3], w);
        let out = conv2d(&tape, &x, &w, None, 1, 1).unwrap();
        assert_eq!(out.to_vec(), x.to_vec());
    }

    /// Direct-summation convolution used as an independent oracle.
    fn conv_reference(
        x: &[f64],
        (c_in, h, w): (usize, usize, usize),
        wt: &[f64],
        (c_out, k): (usize, usize),
        bias: Option<&[f64]>,
        stride: usize,
        pad: usize,
    ) -> Vec<f64> {
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (w + 2 * pad - k) / stride + 1;
        let mut out = vec![0.0; c_out * oh * ow];
        for co in 0..c_out {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.map(|b| b[co]).unwrap_or(0.0);
                    for ci in 0..c_in {
                        for dy in 0..k {
                            for dx in 0..k {
                                let iy = (oy * stride + dy) as isize - pad as isize;
                                let ix = (ox * stride + dx) as isize - pad as isize;
                                if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                    acc += x[(ci * h + iy as usize) * w + ix as usize]
                                        * wt[((co * c_in + ci) * k + dy) * k + dx];
                                }
                            }
                        }
                    }
                    out[(co * oh + oy) * ow + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv2d_matches_direct_summation_reference() {
        let mut rng = crate::tensor::Rng::new(9);
        for &(c_in, h, w, c_out, k, stride, pad) in
            &[(2usize, 5usize, 6usize, 3usize, 3usize, 1usize, 1usize), (3, 7, 7, 2, 3, 2, 1), (1, 4, 4, 4, 1, 1, 0), (2, 9, 8, 2, 5, 2, 2)]
        {
            let x = Tensor::<f64>::randn([c_in, h, w], 1.0, &mut rng);
            let wt = Tensor::<f64>::randn([c_out, c_in, k, k], 1.0, &mut rng);
            let b = Tensor::<f64>::randn([c_out], 1.0, &mut rng);
            let tape = Tape::inference();
            let got = conv2d(&tape, &x, &wt, Some(&b), stride, pad).unwrap();
            let want = conv_reference(
                &x.data(),
                (c_in, h, w),
                &wt.data(),
                (c_out, k),
                Some(&b.data()),
                stride,
                pad,
            );
            for (g, w_) in got.to_vec().iter().zip(&want) {
                assert!((g - w_).abs() < 1e-12, "conv mismatch: {g} vs {w_}");
            }
        }
    }

    #[test]
    fn conv2d_rejects_even_kernel_and_zero_stride() {
        let tape = Tape::<f64>::inference();
        let x = Tensor::<f64>::zeros([1, 4, 4]);
        let w_even = Tensor::<f64>::zeros([1, 1, 2, 2]);
        assert!(conv2d(&tape, &x, &w_even, None, 1, 0).is_err());
        let w = Tensor::<f64>::zeros([1, 1, 3, 3]);
        assert!(conv2d(&tape, &x, &w, None, 0, 1).is_err());
    }

    #[test]
    fn avgpool_mean_and_backward() {
        let tape = Tape::new();
        let x = t64([1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).requires_grad_(true);
        let out = avgpool_global(&tape, &x).unwrap();
        assert_eq!(out.to_vec(), vec![2.5]);
        let loss = sum_all(&tape, &out).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.25; 4]);
    }

    #[test]
    fn softmax_uniform_and_closed_form() {
        let tape = Tape::inference();
        let x = t64([4], vec![0.3; 4]);
        let y = softmax(&tape, &x, 0).unwrap();
        for v in y.to_vec() {
            assert!((v - 0.25).abs() < 1e-12);
        }
        let x = t64([2], vec![0.0, 3f64.ln()]);
        let y = softmax(&tape, &x, 0).unwrap().to_vec();
        assert!((y[0] - 0.25).abs() < 1e-12 && (y[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_shift_invariance_and_row_sums() {
        let mut rng = crate::tensor::Rng::new(1);
        let tape = Tape::inference();
        let x = Tensor::<f64>::randn([3, 5], 2.0, &mut rng);
        let shifted = {
            let d: Vec<f64> = x.data().iter().map(|v| v + 37.5).collect();
            t64([3, 5], d)
        };
        let a = softmax(&tape, &x, 1).unwrap().to_vec();
        let b = softmax(&tape, &shifted, 1).unwrap().to_vec();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-6);
        }
        for r in 0..3 {
            let s: f64 = a[r * 5..(r + 1) * 5].iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn upsample_block_replication() {
        let tape = Tape::inference();
        let x = t64([1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let y = upsample_nearest(&tape, &x, 2).unwrap();
        assert_eq!(y.dims(), &[1, 4, 4]);
        assert_eq!(
            y.to_vec(),
            vec![1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0]
        );
    }

    #[test]
    fn relu_values() {
        let tape = Tape::inference();
        let x = t64([2], vec![-1.0, 2.0]);
        assert_eq!(relu(&tape, &x).to_vec(), vec![0.0, 2.0]);
    }

    #[test]
    fn log_rejects_nonpositive() {
        let tape = Tape::<f64>::inference();
        let x = t64([2], vec![1.0, 0.0]);
        assert!(log(&tape, &x).is_err());
    }

    #[test]
    fn broadcasting_add_channelwise() {
        let tape = Tape::inference();
        let x = t64([2, 2, 1, 1], vec![1.0, 2.0, 3.0, 4.0]);
        let c = t64([1, 2, 1, 1], vec![10.0, 20.0]);
        let y = add(&tape, &x, &c).unwrap();
        assert_eq!(y.to_vec(), vec![11.0, 22.0, 13.0, 24.0]);
    }

    #[test]
    fn broadcast_grad_reduces() {
        let tape = Tape::new();
        let x = t64([2, 3], vec![1.0; 6]);
        let c = t64([1, 3], vec![2.0, 3.0, 4.0]).requires_grad_(true);
        let y = mul(&tape, &x, &c).unwrap();
        let loss = sum_all(&tape, &y).unwrap();
        tape.backward(&loss).unwrap();
        // each c element multiplies two x entries (both 1.0)
        assert_eq!(c.grad().unwrap(), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn concat_and_narrow_roundtrip() {
        let tape = Tape::inference();
        let a = t64([2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = t64([2, 1], vec![5.0, 6.0]);
        let cat = concat(&tape, 1, &[&a, &b]).unwrap();
        assert_eq!(cat.dims(), &[2, 3]);
        assert_eq!(cat.to_vec(), vec![1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let back = narrow(&tape, &cat, 1, 0, 2).unwrap();
        assert_eq!(back.to_vec(), a.to_vec());
    }

    #[test]
    fn reduce_sum_keeps_axis() {
        let tape = Tape::inference();
        let x = t64([2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let s = reduce_sum(&tape, &x, 1).unwrap();
        assert_eq!(s.dims(), &[2, 1]);
        assert_eq!(s.to_vec(), vec![6.0, 15.0]);
        let s0 = reduce_sum(&tape, &x, 0).unwrap();
        assert_eq!(s0.dims(), &[1, 3]);
        assert_eq!(s0.to_vec(), vec![5.0, 7.0, 9.0]);
    }

    #[test]
    fn resize_nearest_identity_and_upscale() {
        let tape = Tape::inference();
        let x = t64([1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let same = resize_nearest(&tape, &x, 2, 2).unwrap();
        assert_eq!(same.to_vec(), x.to_vec());
        let up = resize_nearest(&tape, &x, 4, 4).unwrap();
        let up2 = upsample_nearest(&tape, &x, 2).unwrap();
        assert_eq!(up.to_vec(), up2.to_vec());
    }
}
