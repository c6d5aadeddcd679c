//! Exact-rational replay of the inference datapath.
//!
//! This oracle re-derives the machine's output from the real-valued design
//! description alone: every arithmetic step runs in `BigRational` and every
//! documented quantization node (constant compile, ramp grade, weighted
//! consequent, output) is applied explicitly to the rational value. The only
//! shared operation with the production path is the IEEE 754 single divide,
//! which is the documented node semantic. Nothing here touches the integer
//! shift/saturate machinery under test.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use tsfpi::fixedpoint::RoundingMode;
use tsfpi::inference::RuleRow;
use tsfpi::membership::MfShape;

#[derive(Clone)]
pub struct RationalMachine {
    n_bits: u8,
    mode: RoundingMode,
    inputs: [Vec<RationalMu>; 2],
    rules: Vec<[BigRational; 3]>,
    f1: usize,
}

#[derive(Clone)]
enum RationalMu {
    Falling {
        c: BigRational,
        d: BigRational,
        recip: BigRational,
    },
    Rising {
        e: BigRational,
        f: BigRational,
        recip: BigRational,
    },
    Triangle {
        e: BigRational,
        m: BigRational,
        d: BigRational,
        recip_left: BigRational,
        recip_right: BigRational,
    },
}

fn big(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

fn pow2(bits: u8) -> BigInt {
    BigInt::one() << bits as usize
}

/// Floor or round-half-even of an exact rational.
fn round_rational(x: &BigRational, mode: RoundingMode) -> BigInt {
    match mode {
        RoundingMode::Floor => x.floor().to_integer(),
        RoundingMode::NearestEven => {
            let fl = x.floor();
            let frac = x - &fl;
            let fl = fl.to_integer();
            let half = BigRational::new(BigInt::one(), BigInt::from(2));
            if frac > half || (frac == half && (&fl % 2i32) != BigInt::zero()) {
                fl + 1
            } else {
                fl
            }
        }
    }
}

/// Quantize a rational into `frac_bits` fractional bits and clamp the raw
/// word into `[lo, hi]`.
fn quantize(
    x: &BigRational,
    frac_bits: u8,
    lo: &BigInt,
    hi: &BigInt,
    mode: RoundingMode,
) -> BigInt {
    let scaled = x * BigRational::from_integer(pow2(frac_bits));
    round_rational(&scaled, mode).clamp(lo.clone(), hi.clone())
}

fn as_value(raw: BigInt, frac_bits: u8) -> BigRational {
    BigRational::new(raw, pow2(frac_bits))
}

/// Correctly rounded f32 of a rational whose parts fit f64 exactly.
fn to_f32(x: &BigRational) -> f32 {
    let n = x.numer().to_f64().expect("numerator fits f64");
    let d = x.denom().to_f64().expect("denominator fits f64");
    (n / d) as f32
}

impl RationalMachine {
    /// Compiles the same real-valued description the production bank and
    /// rule base are compiled from. Breakpoints and consequents use the
    /// engine rounding mode; reciprocal slopes always truncate. The
    /// reciprocal itself is the f64 design constant `1/den`, taken exactly.
    pub fn compile(
        shapes: &[Vec<MfShape>],
        rows: &[RuleRow],
        n_bits: u8,
        t_bits: u8,
        mode: RoundingMode,
    ) -> Self {
        // breakpoints and reciprocals live in sW.T (W = 2T + 1); the rule
        // coefficients in the narrower s(T+1).T
        let w_lo = -(BigInt::one() << (2 * t_bits) as usize);
        let w_hi = (BigInt::one() << (2 * t_bits) as usize) - 1;
        let c_lo = -(BigInt::one() << t_bits as usize);
        let c_hi = (BigInt::one() << t_bits as usize) - 1;
        let qt = |v: f64| as_value(quantize(&big(v), t_bits, &w_lo, &w_hi, mode), t_bits);
        let qt_floor = |v: f64| {
            as_value(
                quantize(&big(v), t_bits, &w_lo, &w_hi, RoundingMode::Floor),
                t_bits,
            )
        };
        let qc = |v: f64| as_value(quantize(&big(v), t_bits, &c_lo, &c_hi, mode), t_bits);

        let compile_mu = |shape: &MfShape| match *shape {
            MfShape::RightTrapezoid { c, d, .. } => RationalMu::Falling {
                c: qt(c),
                d: qt(d),
                recip: qt_floor(1.0 / (d - c)),
            },
            MfShape::LeftTrapezoid { e, f, .. } => RationalMu::Rising {
                e: qt(e),
                f: qt(f),
                recip: qt_floor(1.0 / (f - e)),
            },
            MfShape::Triangle { e, m, d, .. } => RationalMu::Triangle {
                e: qt(e),
                m: qt(m),
                d: qt(d),
                recip_left: qt_floor(1.0 / (m - e)),
                recip_right: qt_floor(1.0 / (d - m)),
            },
            MfShape::Lut { .. } => unimplemented!("oracle covers analytic memberships"),
        };

        let f1 = shapes[1].len();
        let mut rules = vec![None; shapes[0].len() * f1];
        for row in rows {
            rules[row.l * f1 + row.k] = Some([qc(row.a), qc(row.b), qc(row.c)]);
        }
        Self {
            n_bits,
            mode,
            inputs: [
                shapes[0].iter().map(compile_mu).collect(),
                shapes[1].iter().map(compile_mu).collect(),
            ],
            rules: rules
                .into_iter()
                .map(|r| r.expect("complete rule table"))
                .collect(),
            f1,
        }
    }

    /// Full defuzzified output for input raw codes in `sV.N`. Returns the
    /// output raw word and the zero-denominator flag.
    pub fn one_shot_raw(&self, x0_raw: i128, x1_raw: i128) -> (i128, bool) {
        let x0 = as_value(BigInt::from(x0_raw), self.n_bits);
        let x1 = as_value(BigInt::from(x1_raw), self.n_bits);

        let f0 = self.grades_for(0, &x0);
        let f1 = self.grades_for(1, &x1);

        // weighted consequents in sH.N, strength sums exact
        let h_hi = (BigInt::one() << (self.n_bits + 2) as usize) - 1;
        let h_lo = -(BigInt::one() << (self.n_bits + 2) as usize);
        let mut num = BigRational::zero();
        let mut den = BigRational::zero();
        for (l, g0) in f0.iter().enumerate() {
            for (k, g1) in f1.iter().enumerate() {
                let o = g0.min(g1).clone();
                let [a, b, c] = &self.rules[l * self.f1 + k];
                let term = &o * (a * &x0 + b * &x1 + c);
                num += as_value(
                    quantize(&term, self.n_bits, &h_lo, &h_hi, self.mode),
                    self.n_bits,
                );
                den += o;
            }
        }

        if den.is_zero() {
            return (0, true);
        }
        let quotient = to_f32(&num) / to_f32(&den);
        let v_hi = pow2(self.n_bits) - 1;
        let v_lo = -pow2(self.n_bits);
        let raw = quantize(&big(quotient as f64), self.n_bits, &v_lo, &v_hi, self.mode);
        (raw.to_i128().expect("fits"), false)
    }

    fn grades_for(&self, input: usize, x: &BigRational) -> Vec<BigRational> {
        let lo = BigInt::zero();
        let hi: BigInt = pow2(self.n_bits) - 1;
        let one = as_value(hi.clone(), self.n_bits);
        let ramp = |hi_v: &BigRational, lo_v: &BigRational, recip: &BigRational| {
            let product = (hi_v - lo_v) * recip;
            as_value(
                quantize(&product, self.n_bits, &lo, &hi, self.mode),
                self.n_bits,
            )
        };
        self.inputs[input]
            .iter()
            .map(|mu| match mu {
                RationalMu::Falling { c, d, recip } => {
                    if x > d {
                        BigRational::zero()
                    } else if x < c {
                        one.clone()
                    } else {
                        ramp(d, x, recip)
                    }
                }
                RationalMu::Rising { e, f, recip } => {
                    if x < e {
                        BigRational::zero()
                    } else if x > f {
                        one.clone()
                    } else {
                        ramp(x, e, recip)
                    }
                }
                RationalMu::Triangle {
                    e,
                    m,
                    d,
                    recip_left,
                    recip_right,
                } => {
                    if x < m {
                        if x < e {
                            BigRational::zero()
                        } else {
                            ramp(x, e, recip_left)
                        }
                    } else if x > d {
                        BigRational::zero()
                    } else {
                        ramp(d, x, recip_right)
                    }
                }
            })
            .collect()
    }
}
