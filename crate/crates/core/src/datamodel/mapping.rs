use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard CIFAR-100 fine-label to coarse-label table.
const CIFAR100_COARSE: [usize; 100] = [
    4, 1, 14, 8, 0, 6, 7, 7, 18, 3, //
    3, 14, 9, 18, 7, 11, 3, 9, 7, 11, //
    6, 11, 5, 10, 7, 6, 13, 15, 3, 15, //
    0, 11, 1, 10, 12, 14, 16, 9, 11, 5, //
    5, 19, 8, 8, 15, 13, 14, 17, 18, 10, //
    16, 4, 17, 4, 2, 0, 17, 4, 18, 17, //
    10, 3, 2, 12, 12, 16, 12, 1, 9, 19, //
    2, 10, 0, 1, 16, 12, 9, 13, 15, 13, //
    16, 19, 2, 4, 6, 19, 5, 5, 8, 19, //
    18, 1, 2, 15, 6, 0, 17, 8, 14, 13,
];

/// Total map from fine class ids to coarse class ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuperclassMapping {
    fine_to_coarse: Vec<usize>,
    coarse_count: usize,
}

impl SuperclassMapping {
    pub fn new(fine_to_coarse: Vec<usize>, coarse_count: usize) -> Result<Self> {
        if fine_to_coarse.is_empty() {
            return Err(Error::Mapping("mapping is empty".into()));
        }
        if let Some((fine, coarse)) = fine_to_coarse.iter().enumerate().find(|(_, &c)| c >= coarse_count) {
            return Err(Error::Mapping(format!(
                "fine class {fine} maps to {coarse}, outside [0, {coarse_count})"
            )));
        }
        Ok(Self {
            fine_to_coarse,
            coarse_count,
        })
    }

    pub fn identity(classes: usize) -> Self {
        Self {
            fine_to_coarse: (0..classes).collect(),
            coarse_count: classes,
        }
    }

    /// The 100 → 20 grouping used for CIFAR-100 superclasses.
    pub fn cifar100() -> Self {
        Self {
            fine_to_coarse: CIFAR100_COARSE.to_vec(),
            coarse_count: 20,
        }
    }

    /// Fine class `f` goes to superclass `f / per_class`, matching the
    /// subclass numbering of synthetic datasets.
    pub fn contiguous(coarse_count: usize, per_class: usize) -> Self {
        Self {
            fine_to_coarse: (0..coarse_count * per_class).map(|f| f / per_class).collect(),
            coarse_count,
        }
    }

    pub fn fine_count(&self) -> usize {
        self.fine_to_coarse.len()
    }

    pub fn coarse_count(&self) -> usize {
        self.coarse_count
    }

    pub fn coarse_of(&self, fine: usize) -> Result<usize> {
        self.fine_to_coarse
            .get(fine)
            .copied()
            .ok_or_else(|| Error::Mapping(format!("fine label {fine} not in mapping")))
    }

    /// Fine ids that map onto `coarse`, ascending.
    pub fn preimage(&self, coarse: usize) -> Vec<usize> {
        self.fine_to_coarse
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == coarse)
            .map(|(f, _)| f)
            .collect()
    }

    /// Parses `fine_id,coarse_id` lines; a non-numeric first line is a header.
    ///
    /// Every fine id in `0..=max` must appear exactly once. The coarse count is
    /// one more than the largest coarse id.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let (Some(a), Some(b), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::Mapping(format!("line {}: expected two columns", lineno + 1)));
            };
            match (a.parse::<usize>(), b.parse::<usize>()) {
                (Ok(f), Ok(c)) => pairs.push((f, c)),
                _ if pairs.is_empty() && lineno == 0 => continue,
                _ => {
                    return Err(Error::Mapping(format!(
                        "line {}: non-integer entry `{line}`",
                        lineno + 1
                    )))
                }
            }
        }
        if pairs.is_empty() {
            return Err(Error::Mapping("mapping file has no entries".into()));
        }
        let fine_count = pairs.iter().map(|p| p.0).max().unwrap() + 1;
        let mut table = vec![None; fine_count];
        for (f, c) in pairs {
            if table[f].replace(c).is_some() {
                return Err(Error::Mapping(format!("fine class {f} listed twice")));
            }
        }
        let fine_to_coarse = table
            .into_iter()
            .enumerate()
            .map(|(f, c)| c.ok_or_else(|| Error::Mapping(format!("fine class {f} missing"))))
            .collect::<Result<Vec<_>>>()?;
        let coarse_count = fine_to_coarse.iter().max().unwrap() + 1;
        Self::new(fine_to_coarse, coarse_count)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cifar_groups_have_five_members() {
        let m = SuperclassMapping::cifar100();
        for c in 0..20 {
            assert_eq!(m.preimage(c).len(), 5, "superclass {c}");
        }
        assert_eq!(m.coarse_of(69).unwrap(), 19); // rocket -> vehicles 2
        assert_eq!(m.coarse_of(51).unwrap(), 4); // mushroom -> fruit and vegetables
        assert_eq!(m.coarse_of(40).unwrap(), 5); // lamp -> household electrical devices
    }

    #[test]
    fn parse_with_and_without_header() {
        let a = SuperclassMapping::parse("fine_id,coarse_id\n0,1\n1,0\n2,1\n").unwrap();
        let b = SuperclassMapping::parse("0,1\n1,0\n2,1").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.coarse_count(), 2);
        assert_eq!(a.preimage(1), vec![0, 2]);
    }

    #[test]
    fn parse_rejects_gaps_and_duplicates() {
        assert!(SuperclassMapping::parse("0,0\n2,1\n").is_err());
        assert!(SuperclassMapping::parse("0,0\n0,1\n").is_err());
        assert!(SuperclassMapping::parse("0,0\nx,1\n").is_err());
        assert!(SuperclassMapping::parse("").is_err());
    }

    #[test]
    fn out_of_domain_lookup() {
        let m = SuperclassMapping::identity(3);
        assert!(matches!(m.coarse_of(3), Err(Error::Mapping(_))));
        assert!(SuperclassMapping::new(vec![0, 5], 2).is_err());
    }
}
