//! Globally adaptive cubature on rectangles.
//!
//! Each cell is integrated with the tensor-product 15-point Gauss–Kronrod
//! rule; the embedded 7-point Gauss tensor rule supplies the error estimate.
//! The cell with the largest estimated error is split into four until the
//! summed error bound meets the tolerance. Vector-valued integrands share
//! node evaluations across components, which is what makes tabulating a whole
//! photocount grid by quadrature affordable.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_553,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
/// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_69,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    fn quarters(&self) -> [Rect; 4] {
        let xm = 0.5 * (self.x0 + self.x1);
        let ym = 0.5 * (self.y0 + self.y1);
        [
            Rect::new(self.x0, xm, self.y0, ym),
            Rect::new(xm, self.x1, self.y0, ym),
            Rect::new(self.x0, xm, ym, self.y1),
            Rect::new(xm, self.x1, ym, self.y1),
        ]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    /// Maximum number of cell splits before giving up.
    pub max_subdivisions: usize,
}

impl QuadOptions {
    pub fn with_tol(abs_tol: f64) -> Self {
        QuadOptions {
            abs_tol,
            max_subdivisions: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadEstimate {
    pub value: f64,
    pub error: f64,
    pub subdivisions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadVecEstimate {
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub subdivisions: usize,
}

impl QuadVecEstimate {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }
}

/// ∬ f over `rect` to absolute tolerance `abs_tol`.
pub fn quad2d<F>(f: F, rect: Rect, abs_tol: f64) -> Result<QuadEstimate>
where
    F: Fn(f64, f64) -> f64,
{
    quad2d_with(f, rect, QuadOptions::with_tol(abs_tol))
}

pub fn quad2d_with<F>(f: F, rect: Rect, opts: QuadOptions) -> Result<QuadEstimate>
where
    F: Fn(f64, f64) -> f64,
{
    let est = quad2d_vec(|x, y, out: &mut [f64]| out[0] = f(x, y), 1, rect, opts)?;
    Ok(QuadEstimate {
        value: est.values[0],
        error: est.errors[0],
        subdivisions: est.subdivisions,
    })
}

/// Vector-valued cubature: `f(x, y, out)` fills `out[..dim]`. The tolerance
/// applies to every component's summed error bound.
pub fn quad2d_vec<F>(f: F, dim: usize, rect: Rect, opts: QuadOptions) -> Result<QuadVecEstimate>
where
    F: Fn(f64, f64, &mut [f64]),
{
    if !(opts.abs_tol > 0.0) {
        return Err(Error::Domain {
            what: "quadrature tolerance",
            value: opts.abs_tol,
        });
    }
    if !(rect.x1 > rect.x0 && rect.y1 > rect.y0) {
        return Err(Error::InvalidParams(format!(
            "degenerate integration rectangle {rect:?}"
        )));
    }

    let mut rule = TensorRule::new(dim);
    let mut values = vec![0.0; dim];
    let mut errors = vec![0.0; dim];
    let mut heap = BinaryHeap::new();

    let first = rule.apply(&f, rect);
    add_into(&mut values, &first.value);
    add_into(&mut errors, &first.error);
    heap.push(first);

    let mut subdivisions = 0;
    loop {
        let worst = errors.iter().copied().fold(0.0, f64::max);
        if worst <= opts.abs_tol {
            break;
        }
        if !worst.is_finite() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonConvergence {
                what: "2-D quadrature",
                detail: "integrand produced non-finite values".into(),
            });
        }
        if subdivisions >= opts.max_subdivisions {
            return Err(Error::NonConvergence {
                what: "2-D quadrature",
                detail: format!(
                    "error bound {worst:e} above tolerance {:e} after {subdivisions} subdivisions",
                    opts.abs_tol
                ),
            });
        }
        let cell = heap.pop().expect("heap holds every live cell");
        sub_from(&mut values, &cell.value);
        sub_from(&mut errors, &cell.error);
        for child in cell.rect.quarters() {
            let c = rule.apply(&f, child);
            add_into(&mut values, &c.value);
            add_into(&mut errors, &c.error);
            heap.push(c);
        }
        subdivisions += 1;
    }

    // re-sum from the cells to shed the running-total rounding
    let mut values = vec![0.0; dim];
    let mut errors = vec![0.0; dim];
    for cell in heap.iter() {
        add_into(&mut values, &cell.value);
        add_into(&mut errors, &cell.error);
    }
    Ok(QuadVecEstimate {
        values,
        errors,
        subdivisions,
    })
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(a, b)| *a += b);
}

fn sub_from(acc: &mut [f64], x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(a, b)| *a -= b);
}

struct Cell {
    rect: Rect,
    value: Vec<f64>,
    error: Vec<f64>,
    key: f64,
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.key.total_cmp(&other.key) == Ordering::Equal
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key)
    }
}

struct TensorRule {
    nodes: [f64; 15],
    wk: [f64; 15],
    wg: [f64; 15],
    buf: Vec<f64>,
}

impl TensorRule {
    fn new(dim: usize) -> Self {
        let mut nodes = [0.0; 15];
        let mut wk = [0.0; 15];
        let mut wg = [0.0; 15];
        for i in 0..7 {
            nodes[i] = -XGK[i];
            nodes[14 - i] = XGK[i];
            wk[i] = WGK[i];
            wk[14 - i] = WGK[i];
            if i % 2 == 1 {
                wg[i] = WG[i / 2];
                wg[14 - i] = WG[i / 2];
            }
        }
        wk[7] = WGK[7];
        wg[7] = WG[3];
        TensorRule {
            nodes,
            wk,
            wg,
            buf: vec![0.0; dim],
        }
    }

    fn apply<F>(&mut self, f: &F, rect: Rect) -> Cell
    where
        F: Fn(f64, f64, &mut [f64]),
    {
        let dim = self.buf.len();
        let hx = 0.5 * (rect.x1 - rect.x0);
        let hy = 0.5 * (rect.y1 - rect.y0);
        let cx = rect.x0 + hx;
        let cy = rect.y0 + hy;
        let mut kron = vec![0.0; dim];
        let mut gauss = vec![0.0; dim];
        for i in 0..15 {
            let x = cx + hx * self.nodes[i];
            for j in 0..15 {
                let y = cy + hy * self.nodes[j];
                f(x, y, &mut self.buf);
                let wk = self.wk[i] * self.wk[j];
                let wg = self.wg[i] * self.wg[j];
                for d in 0..dim {
                    kron[d] += wk * self.buf[d];
                }
                if wg != 0.0 {
                    for d in 0..dim {
                        gauss[d] += wg * self.buf[d];
                    }
                }
            }
        }
        let jac = hx * hy;
        let mut error = vec![0.0; dim];
        let mut key = 0.0_f64;
        for d in 0..dim {
            kron[d] *= jac;
            gauss[d] *= jac;
            let e = (kron[d] - gauss[d]).abs();
            error[d] = e;
            key = key.max(e);
        }
        Cell {
            rect,
            value: kron,
            error,
            key,
        }
    }
}
