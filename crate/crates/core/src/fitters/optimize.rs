//! One-dimensional maximization and root finding.

const GOLDEN: f64 = 0.381_966_011_250_105_1;

/// Result of walking uphill from a start point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bracket {
    /// `lo < mid < hi` with `f(mid) ≥ max(f(lo), f(hi))`.
    Interior { lo: f64, mid: f64, hi: f64 },
    /// Still ascending when the lower limit was reached.
    LowerLimit,
    /// Still ascending when the upper limit was reached.
    UpperLimit,
}

/// Brackets a maximum of `f` by expanding steps away from `start`.
pub fn bracket_max<F, E>(f: &F, start: f64, floor: f64, ceil: f64) -> Result<Bracket, E>
where
    F: Fn(f64) -> Result<f64, E>,
{
    const MAX_STEP: f64 = 8.0;
    let start = start.clamp(floor, ceil);
    let f0 = f(start)?;
    let right = (start + 1.0).min(ceil);
    let left = (start - 1.0).max(floor);
    let fr = f(right)?;
    let fl = f(left)?;

    let dir = if fr > f0 && fr >= fl {
        1.0
    } else if fl > f0 {
        -1.0
    } else {
        return Ok(Bracket::Interior {
            lo: left,
            mid: start,
            hi: right,
        });
    };

    let (mut prev, mut cur, mut fcur) = if dir > 0.0 { (start, right, fr) } else { (start, left, fl) };
    let mut step: f64 = 1.0;
    loop {
        if (dir > 0.0 && cur >= ceil) || (dir < 0.0 && cur <= floor) {
            return Ok(if dir > 0.0 { Bracket::UpperLimit } else { Bracket::LowerLimit });
        }
        step = (step * 2.0).min(MAX_STEP);
        let next = (cur + dir * step).clamp(floor, ceil);
        let fnext = f(next)?;
        if fnext <= fcur {
            let (lo, hi) = if dir > 0.0 { (prev, next) } else { (next, prev) };
            return Ok(Bracket::Interior { lo, mid: cur, hi });
        }
        prev = cur;
        cur = next;
        fcur = fnext;
    }
}

/// Brent's golden-section / parabolic maximization on `[lo, hi]` started at `mid`.
///
/// Returns `(x, f(x))`; stops when the bracket shrinks below `tol`.
pub fn brent_max<F, E>(f: &F, lo: f64, mid: f64, hi: f64, tol: f64) -> Result<(f64, f64), E>
where
    F: Fn(f64) -> Result<f64, E>,
{
    // minimize g = -f
    let (mut a, mut b) = (lo, hi);
    let mut x = mid;
    let mut w = mid;
    let mut v = mid;
    let mut fx = -f(x)?;
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..500 {
        let xm = 0.5 * (a + b);
        let tol1 = tol * 0.5 + 1e-15 * x.abs();
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if !(p.abs() >= (0.5 * q * etemp).abs() || p <= q * (a - x) || p >= q * (b - x)) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = -f(u)?;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Ok((x, -fx))
}

/// Brent's root finder on a sign-changing bracket `[a, b]`.
pub fn brent_root<F, E>(f: &F, mut a: f64, mut b: f64, tol: f64) -> Result<Option<f64>, E>
where
    F: Fn(f64) -> Result<f64, E>,
{
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    if fa == 0.0 {
        return Ok(Some(a));
    }
    if fb == 0.0 {
        return Ok(Some(b));
    }
    if fa.signum() == fb.signum() {
        return Ok(None);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(Some(b));
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b)?;
    }
    Ok(Some(b))
}

/// Refines an approximate maximizer `x0` to the nearest zero of `score`.
///
/// Returns `x0` unchanged if no sign change is found close by.
pub fn polish_stationary<F, E>(score: &F, x0: f64) -> Result<f64, E>
where
    F: Fn(f64) -> Result<f64, E>,
{
    let s0 = score(x0)?;
    if s0 == 0.0 {
        return Ok(x0);
    }
    let dir = s0.signum();
    let mut delta = 1e-7 * x0.abs().max(1.0);
    for _ in 0..30 {
        let x1 = x0 + dir * delta;
        if score(x1)?.signum() != dir {
            let (lo, hi) = if dir > 0.0 { (x0, x1) } else { (x1, x0) };
            return Ok(brent_root(score, lo, hi, 0.0)?.unwrap_or(x0));
        }
        delta *= 2.0;
    }
    Ok(x0)
}
