use super::ScoredSet;
use crate::error::{Error, Result};

/// Fraction of positive outcomes.
pub fn prevalence(s: &ScoredSet) -> f64 {
    s.labels().iter().map(|&o| f64::from(o)).sum::<f64>() / s.len() as f64
}

fn mean_squared(preds: impl Iterator<Item = f64>, labels: &[u8]) -> f64 {
    let total: f64 = preds
        .zip(labels)
        .map(|(f, &o)| {
            let r = f - f64::from(o);
            r * r
        })
        .sum();
    total / labels.len() as f64
}

/// `BS = (1/N) Σ (f_t − o_t)²`.
pub fn brier(s: &ScoredSet) -> Result<f64> {
    s.check_probabilities()?;
    Ok(mean_squared(s.scores().iter().copied(), s.labels()))
}

/// `BSS = 1 − BS / BS_max`, where `BS_max` is the Brier score of a predictor
/// that always outputs the prevalence of `s` itself.
pub fn bss(s: &ScoredSet) -> Result<f64> {
    let bs = brier(s)?;
    let pi = prevalence(s);
    let bs_max = mean_squared(std::iter::repeat(pi), s.labels());
    if bs_max == 0.0 {
        return Err(Error::Validation(
            "Brier skill score undefined when all outcomes are equal".into(),
        ));
    }
    Ok(1.0 - bs / bs_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_and_reference() {
        let s = ScoredSet::new(vec![1.0, 0.0, 0.0, 1.0], vec![1, 0, 0, 1]).unwrap();
        assert_eq!(brier(&s).unwrap(), 0.0);
        assert_eq!(bss(&s).unwrap(), 1.0);

        let r = ScoredSet::new(vec![0.25; 4], vec![1, 0, 0, 0]).unwrap();
        assert_eq!(brier(&r).unwrap(), 0.1875);
        assert_eq!(bss(&r).unwrap(), 0.0);
    }

    #[test]
    fn undefined_for_one_class() {
        let s = ScoredSet::new(vec![0.1, 0.2], vec![0, 0]).unwrap();
        assert!(bss(&s).is_err());
    }

    #[test]
    fn worse_than_reference_is_negative() {
        let s = ScoredSet::new(vec![0.9, 0.9, 0.9, 0.9], vec![1, 0, 0, 0]).unwrap();
        assert!(brier(&s).unwrap() > 0.1875);
        assert!(bss(&s).unwrap() < 0.0);
    }

    proptest! {
        #[test]
        fn ranges_and_reference_point(
            raw in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 2..200),
        ) {
            let labels: Vec<u8> = raw.iter().map(|(_, b)| u8::from(*b)).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let s = ScoredSet::new(raw.iter().map(|(f, _)| *f).collect(), labels.clone()).unwrap();
            let bs = brier(&s).unwrap();
            prop_assert!((0.0..=1.0).contains(&bs));
            prop_assert!(bss(&s).unwrap() <= 1.0);
            let pi = prevalence(&s);
            let reference = ScoredSet::new(vec![pi; labels.len()], labels).unwrap();
            prop_assert_eq!(bss(&reference).unwrap(), 0.0);
        }
    }
}
