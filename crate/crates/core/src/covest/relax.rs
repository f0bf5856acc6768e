use nalgebra::DVector;

use crate::error::{Error, Result};

/// Running average `old + (new − old) / τ`.
pub fn relax(old: &DVector<f64>, new: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
    check_tau(tau)?;
    if old.len() != new.len() {
        return Err(Error::invalid("relax: coefficient vectors differ in length"));
    }
    Ok(old + (new - old) / tau)
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 1.0) {
        return Err(Error::invalid(format!(
            "relaxation coefficient must be >= 1, got {tau}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn examples() {
        assert_eq!(relax(&v(&[3.0, -1.0]), &v(&[0.5, 2.0]), 1.0).unwrap(), v(&[0.5, 2.0]));
        assert_eq!(relax(&v(&[0.7]), &v(&[0.7]), 37.0).unwrap(), v(&[0.7]));
        assert_eq!(relax(&v(&[0.0]), &v(&[1.0]), 2.0).unwrap(), v(&[0.5]));
    }

    #[test]
    fn rejects_small_tau() {
        assert!(matches!(
            relax(&v(&[0.0]), &v(&[1.0]), 0.5),
            Err(Error::InvalidInput(_))
        ));
        assert!(relax(&v(&[0.0]), &v(&[1.0]), f64::NAN).is_err());
    }
}
