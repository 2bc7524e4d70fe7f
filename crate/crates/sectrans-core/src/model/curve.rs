use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::ModelError;

/// Tabulated worst-case attack-induced estimation error `J(l, f)` of one plant.
#[derive(Clone, Debug, PartialEq)]
pub struct QocCurve {
    pub plant_id: String,
    // keyed by (f, l) so that one block length is a contiguous range
    entries: BTreeMap<(u32, u32), f64>,
}

impl QocCurve {
    /// Builds a curve from `(l, f, J)` triples, rejecting entries with `l < f`,
    /// negative or non-finite values, and any decrease in `l` for a fixed `f`.
    pub fn from_points<I>(plant_id: &str, points: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (u32, u32, f64)>,
    {
        let mut entries = BTreeMap::new();
        for (l, f, j) in points {
            if f == 0 || l < f {
                return Err(ModelError::Curve(alloc::format!("{plant_id}: J({l},{f}) needs 1 ≤ f ≤ l")));
            }
            if !j.is_finite() || j < 0.0 {
                return Err(ModelError::Curve(alloc::format!("{plant_id}: J({l},{f}) = {j} is not a valid bound")));
            }
            if entries.insert((f, l), j).is_some() {
                return Err(ModelError::Curve(alloc::format!("{plant_id}: J({l},{f}) given twice")));
            }
        }
        let mut prev: Option<((u32, u32), f64)> = None;
        for (&(f, l), &j) in &entries {
            if let Some(((pf, pl), pj)) = prev {
                if pf == f && j < pj {
                    return Err(ModelError::Curve(alloc::format!(
                        "{plant_id}: J({l},{f}) = {j} drops below J({pl},{f}) = {pj}"
                    )));
                }
            }
            prev = Some(((f, l), j));
        }
        Ok(QocCurve { plant_id: plant_id.into(), entries })
    }

    pub fn get(&self, l: u32, f: u32) -> Option<f64> {
        self.entries.get(&(f, l)).copied()
    }

    pub fn block_lengths(&self) -> Vec<u32> {
        let mut fs: Vec<u32> = self.entries.keys().map(|&(f, _)| f).collect();
        fs.dedup();
        fs
    }

    /// `(l, J)` pairs for block length `f`, in increasing `l`.
    pub fn series(&self, f: u32) -> Vec<(u32, f64)> {
        self.entries.range((f, 0)..=(f, u32::MAX)).map(|(&(_, l), &j)| (l, j)).collect()
    }

    pub fn points(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.entries.iter().map(|(&(f, l), &j)| (l, f, j))
    }
}

/// Largest tabulated `l` whose bound stays within `bound`, or `None` if even the
/// shortest tabulated distance exceeds it.
pub fn policy_from_qoc(curve: &QocCurve, f: u32, bound: f64) -> Result<Option<u32>, ModelError> {
    let series = curve.series(f);
    if series.is_empty() {
        return Err(ModelError::Curve(alloc::format!("{}: no series for f = {f}", curve.plant_id)));
    }
    Ok(series.iter().take_while(|&&(_, j)| j <= bound).last().map(|&(l, _)| l))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lk_f2() -> QocCurve {
        let vals = [
            0.0, 0.07990063, 0.12062763, 0.15914763, 0.21512763, 0.26657763, 0.33229763, 0.39308763, 0.46419763,
        ];
        QocCurve::from_points("LK", vals.iter().enumerate().map(|(i, &j)| (i as u32 + 2, 2, j))).unwrap()
    }

    #[test]
    fn bound_picks_last_admissible_distance() {
        assert_eq!(policy_from_qoc(&lk_f2(), 2, 0.40).unwrap(), Some(9));
    }

    #[test]
    fn infinite_bound_picks_longest_distance() {
        assert_eq!(policy_from_qoc(&lk_f2(), 2, f64::INFINITY).unwrap(), Some(10));
    }

    #[test]
    fn bound_below_every_entry_yields_none() {
        let c = QocCurve::from_points("X", [(1, 1, 0.5), (2, 1, 0.6)]).unwrap();
        assert_eq!(policy_from_qoc(&c, 1, 0.1).unwrap(), None);
    }

    #[test]
    fn missing_block_length_is_an_error() {
        assert!(policy_from_qoc(&lk_f2(), 3, 1.0).is_err());
    }

    #[test]
    fn decreasing_table_is_rejected() {
        assert!(QocCurve::from_points("X", [(1, 1, 0.5), (2, 1, 0.4)]).is_err());
        assert!(QocCurve::from_points("X", [(1, 2, 0.5)]).is_err());
    }
}
