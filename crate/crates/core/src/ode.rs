//! Dormand–Prince 5(4) with step-size control for small fixed-size systems.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Dopri5Options {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub max_steps: usize,
}

impl Default for Dopri5Options {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-14, h_init: 1e-4, max_steps: 1_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn lin<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Integrates `y' = f(x, y)` from `x0` towards `x_end` (either direction).
/// `observer` sees every accepted step and may stop the integration.
/// Returns the last accepted state.
pub fn integrate<const N: usize>(
    mut f: impl FnMut(f64, &[f64; N]) -> [f64; N],
    x0: f64,
    y0: [f64; N],
    x_end: f64,
    opts: &Dopri5Options,
    mut observer: impl FnMut(f64, &[f64; N]) -> Control,
) -> Result<(f64, [f64; N], Stats)> {
    let dir = if x_end >= x0 { 1.0 } else { -1.0 };
    let mut x = x0;
    let mut y = y0;
    let mut k1 = f(x, &y);
    let mut h = opts.h_init.abs().min((x_end - x0).abs()).max(f64::MIN_POSITIVE) * dir;
    let mut stats = Stats::default();
    if observer(x, &y) == Control::Stop || x == x_end {
        return Ok((x, y, stats));
    }
    loop {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::Integrator(format!("step budget exhausted at x = {x}")));
        }
        let last = (x + h - x_end) * dir >= 0.0;
        if last {
            h = x_end - x;
        }
        let k2 = f(x + C2 * h, &lin(&y, h, &[(A21, &k1)]));
        let k3 = f(x + C3 * h, &lin(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(x + C4 * h, &lin(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(x + C5 * h, &lin(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = f(
            x + h,
            &lin(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        );
        let y_new = lin(&y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let k7 = f(x + h, &y_new);
        let mut err = 0.0;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / N as f64).sqrt();
        if !err.is_finite() || !y_new.iter().all(|v| v.is_finite()) {
            stats.rejected += 1;
            h *= 0.2;
            if h.abs() < 1e-300 {
                return Err(Error::Integrator(format!("non-finite state near x = {x}")));
            }
            continue;
        }
        if err <= 1.0 {
            stats.accepted += 1;
            x = if last { x_end } else { x + h };
            y = y_new;
            k1 = k7;
            if observer(x, &y) == Control::Stop || last {
                return Ok((x, y, stats));
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
        }
        if (x + h) == x {
            return Err(Error::Integrator(format!("step size underflow at x = {x}")));
        }
    }
}

/// States at each of `points` (monotone, starting at or beyond `x0` in the
/// integration direction).
pub fn integrate_to_points<const N: usize>(
    mut f: impl FnMut(f64, &[f64; N]) -> [f64; N],
    x0: f64,
    y0: [f64; N],
    points: &[f64],
    opts: &Dopri5Options,
) -> Result<Vec<[f64; N]>> {
    let mut out = Vec::with_capacity(points.len());
    let mut x = x0;
    let mut y = y0;
    let mut o = *opts;
    for &p in points {
        if p != x {
            let (xe, ye, _) = integrate(&mut f, x, y, p, &o, |_, _| Control::Continue)?;
            o.h_init = ((p - x).abs()).max(1e-12);
            x = xe;
            y = ye;
        }
        out.push(y);
    }
    Ok(out)
}
