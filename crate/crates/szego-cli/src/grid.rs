//! Parsing of grid and list arguments.

use num_complex::Complex64 as C64;
use szego_dirac::{Error, Result};

fn number(s: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::validation(format!("'{s}' is not a number")))?;
    if !v.is_finite() {
        return Err(Error::validation(format!("'{s}' is not finite")));
    }
    Ok(v)
}

/// `lo:hi:step`, inclusive of `hi` up to rounding; a single number is a one-point grid.
pub fn real_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [x] => Ok(vec![number(x)?]),
        [lo, hi, step] => {
            let (lo, hi, step) = (number(lo)?, number(hi)?, number(step)?);
            if !(step > 0.0) || hi < lo {
                return Err(Error::validation(format!("grid '{s}' needs lo <= hi and step > 0")));
            }
            let n = ((hi - lo) / step + 1e-9).floor() as usize;
            if n > 10_000_000 {
                return Err(Error::validation(format!("grid '{s}' has too many points")));
            }
            Ok((0..=n).map(|k| lo + k as f64 * step).collect())
        }
        _ => Err(Error::validation(format!("grid '{s}' must look like lo:hi:step"))),
    }
}

/// Two real grids joined by a comma, real part first; row-major in the imaginary part.
pub fn complex_grid(s: &str) -> Result<Vec<C64>> {
    let (re, im) = s.split_once(',').ok_or_else(|| Error::validation(format!("complex grid '{s}' needs two ranges joined by ','")))?;
    let (xs, ys) = (real_grid(re)?, real_grid(im)?);
    Ok(ys.iter().flat_map(|y| xs.iter().map(move |x| C64::new(*x, *y))).collect())
}

/// Comma-separated numbers, exactly `n` of them when `n` is given.
pub fn list(s: &str, n: Option<usize>) -> Result<Vec<f64>> {
    let v: Vec<f64> = s.split(',').map(number).collect::<Result<_>>()?;
    match n {
        Some(n) if v.len() != n => Err(Error::validation(format!("'{s}' must have {n} comma-separated numbers"))),
        _ => Ok(v),
    }
}

pub fn point(s: &str) -> Result<C64> {
    let v = list(s, Some(2))?;
    Ok(C64::new(v[0], v[1]))
}
