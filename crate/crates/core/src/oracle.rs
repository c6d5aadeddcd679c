//! Double-precision reference inference and the error-measurement harness.
//!
//! The reference engine evaluates the same bank and rule base as the
//! fixed-point machine, but from the unquantized design constants and
//! entirely in f64: exact breakpoints, min t-norm, weighted average with
//! real coefficients. It knows nothing of `N` or `T`, which is exactly what
//! makes it a yardstick for both.

use std::thread;

use crate::fixedpoint::{FixedValue, RoundingMode};
use crate::inference::{fim_one_shot_with, FimScratch, InferenceError, RuleBase, RuleRow};
use crate::membership::{MembershipBank, MembershipError, MfShape};

/// Reference defuzzified output for real inputs. Returns the value and a
/// flag mirroring the fixed path's zero-denominator policy (output forced
/// to 0).
pub fn fim_reference(x0: f64, x1: f64, bank: &MembershipBank, rules: &RuleBase) -> (f64, bool) {
    let f0: Vec<f64> = bank
        .functions(0)
        .iter()
        .map(|s| s.eval_reference(x0))
        .collect();
    let f1: Vec<f64> = bank
        .functions(1)
        .iter()
        .map(|s| s.eval_reference(x1))
        .collect();
    let mut num = 0.0;
    let mut den = 0.0;
    for (l, &g0) in f0.iter().enumerate() {
        for (k, &g1) in f1.iter().enumerate() {
            let o = g0.min(g1);
            let rule = rules.rule(rules.index(l, k));
            num += o * (rule.real_a * x0 + rule.real_b * x1 + rule.real_c);
            den += o;
        }
    }
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

/// Error summary of one `(N, T)` configuration against the reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseReport {
    pub n_bits: u8,
    pub t_bits: u8,
    pub grid_points: usize,
    pub mse: f64,
    pub max_abs_err: f64,
}

/// `points` evenly spaced values covering [-1, 1] inclusive. The upper
/// half mirrors the lower half exactly, so the grid is closed under
/// negation bit-for-bit.
pub fn grid_axis(points: usize) -> Vec<f64> {
    assert!(points >= 2);
    (0..points)
        .map(|i| {
            let j = points - 1 - i;
            if i <= j {
                -1.0 + 2.0 * i as f64 / (points - 1) as f64
            } else {
                -(-1.0 + 2.0 * j as f64 / (points - 1) as f64)
            }
        })
        .collect()
}

/// One row of the input/output surface map.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceRow {
    pub x0: f64,
    pub x1: f64,
    pub v_fixed: f64,
    pub v_reference: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error(transparent)]
    Membership(#[from] MembershipError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

/// Evaluates both engines over the full `points x points` grid. The fixed
/// machine sees the grid quantized into its `sV.N` input; the reference
/// sees the real grid values.
pub fn surface_map(
    shapes: &[Vec<MfShape>],
    rows: &[RuleRow],
    n_bits: u8,
    t_bits: u8,
    mode: RoundingMode,
    points: usize,
) -> Result<Vec<SurfaceRow>, OracleError> {
    let bank = MembershipBank::compile(shapes, n_bits, t_bits, mode)?;
    let rules = RuleBase::compile(
        rows,
        bank.functions(0).len(),
        bank.functions(1).len(),
        t_bits,
        mode,
    )?;
    let axis = grid_axis(points);
    let mut out = Vec::with_capacity(points * points);
    let mut scratch = FimScratch::default();
    let in_fmt = bank.input_format();
    for &x0 in &axis {
        let q0 = FixedValue::quantize(x0, in_fmt, mode);
        for &x1 in &axis {
            let q1 = FixedValue::quantize(x1, in_fmt, mode);
            let (v, _) = fim_one_shot_with(&mut scratch, q0, q1, &bank, &rules)?;
            let (v_ref, _) = fim_reference(x0, x1, &bank, &rules);
            out.push(SurfaceRow {
                x0,
                x1,
                v_fixed: v.value(),
                v_reference: v_ref,
            });
        }
    }
    Ok(out)
}

/// Mean squared error and worst-case error of the fixed machine against the
/// reference over the full grid, for every `(N, T)` pair. The pairs run on
/// worker threads (each evaluation is pure); the report order matches the
/// input order.
pub fn mse_sweep(
    n_list: &[u8],
    t_list: &[u8],
    shapes: &[Vec<MfShape>],
    rows: &[RuleRow],
    mode: RoundingMode,
    grid_points: usize,
) -> Result<Vec<MseReport>, OracleError> {
    // The reference surface is independent of (N, T): compute it once.
    let ref_bank = MembershipBank::compile(shapes, n_list[0], t_list[0], mode)?;
    let ref_rules = RuleBase::compile(
        rows,
        ref_bank.functions(0).len(),
        ref_bank.functions(1).len(),
        t_list[0],
        mode,
    )?;
    let axis = grid_axis(grid_points);
    let mut reference = Vec::with_capacity(grid_points * grid_points);
    for &x0 in &axis {
        for &x1 in &axis {
            reference.push(fim_reference(x0, x1, &ref_bank, &ref_rules).0);
        }
    }

    let pairs: Vec<(u8, u8)> = n_list
        .iter()
        .flat_map(|&n| t_list.iter().map(move |&t| (n, t)))
        .collect();

    let results: Vec<Result<MseReport, OracleError>> = thread::scope(|scope| {
        let handles: Vec<_> = pairs
            .iter()
            .map(|&(n, t)| {
                let (axis, reference) = (&axis, &reference);
                scope.spawn(move || mse_one(n, t, shapes, rows, mode, axis, reference))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    results.into_iter().collect()
}

fn mse_one(
    n_bits: u8,
    t_bits: u8,
    shapes: &[Vec<MfShape>],
    rows: &[RuleRow],
    mode: RoundingMode,
    axis: &[f64],
    reference: &[f64],
) -> Result<MseReport, OracleError> {
    let bank = MembershipBank::compile(shapes, n_bits, t_bits, mode)?;
    let rules = RuleBase::compile(
        rows,
        bank.functions(0).len(),
        bank.functions(1).len(),
        t_bits,
        mode,
    )?;
    let in_fmt = bank.input_format();
    let mut scratch = FimScratch::default();
    let mut sq_sum = 0.0;
    let mut max_abs = 0.0f64;
    let mut idx = 0;
    for &x0 in axis {
        let q0 = FixedValue::quantize(x0, in_fmt, mode);
        for &x1 in axis {
            let q1 = FixedValue::quantize(x1, in_fmt, mode);
            let (v, _) = fim_one_shot_with(&mut scratch, q0, q1, &bank, &rules)?;
            let err = reference[idx] - v.value();
            sq_sum += err * err;
            max_abs = max_abs.max(err.abs());
            idx += 1;
        }
    }
    Ok(MseReport {
        n_bits,
        t_bits,
        grid_points: axis.len() * axis.len(),
        mse: sq_sum / (axis.len() * axis.len()) as f64,
        max_abs_err: max_abs,
    })
}
