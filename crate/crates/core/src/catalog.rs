//! Built-in tableaux, addressable by name.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::rational::{int, rat, Rational};
use crate::tableau::{parse_tableau, ButcherTableau, TableauError};

pub const BUILTIN_NAMES: [&str; 10] = [
    "ssprk33",
    "ssprk104",
    "midpoint",
    "euler",
    "paper_c4s2",
    "paper_c5s3",
    "paper_counterex",
    "paper_testmethod",
    "implicit_midpoint",
    "lobatto3a2",
];

#[derive(Debug, Error)]
pub enum ResolveError {
    #[error("unknown method `{0}` (not a catalog name or readable file)")]
    Unknown(String),
    #[error("failed to parse `{path}`: {source}")]
    Parse {
        path: String,
        #[source]
        source: TableauError,
    },
}

fn tableau(name: &str, a: Vec<Vec<Rational>>, b: Vec<Rational>) -> ButcherTableau {
    ButcherTableau::with_row_sum_nodes(name, a, b).expect("catalog tableau is well formed")
}

fn z() -> Rational {
    int(0)
}

pub fn ssprk33() -> ButcherTableau {
    tableau(
        "ssprk33",
        vec![
            vec![z(), z(), z()],
            vec![int(1), z(), z()],
            vec![rat(1, 4), rat(1, 4), z()],
        ],
        vec![rat(1, 6), rat(1, 6), rat(2, 3)],
    )
}

/// Ten-stage, fourth-order SSP method of Ketcheson (2008).
pub fn ssprk104() -> ButcherTableau {
    let s = 10;
    let mut a = vec![vec![z(); s]; s];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, aij) in row.iter_mut().enumerate().take(i) {
            *aij = if i <= 4 {
                rat(1, 6)
            } else if j <= 4 {
                rat(1, 15)
            } else {
                rat(1, 6)
            };
        }
    }
    tableau("ssprk104", a, vec![rat(1, 10); s])
}

pub fn midpoint() -> ButcherTableau {
    tableau(
        "midpoint",
        vec![vec![z(), z()], vec![rat(1, 2), z()]],
        vec![z(), int(1)],
    )
}

pub fn euler() -> ButcherTableau {
    tableau("euler", vec![vec![z()]], vec![int(1)])
}

/// Four-stage second-order method with nodes (0, 1, 0, 1).
pub fn paper_c4s2() -> ButcherTableau {
    tableau(
        "paper_c4s2",
        vec![
            vec![z(), z(), z(), z()],
            vec![int(1), z(), z(), z()],
            vec![int(1), int(-1), z(), z()],
            vec![int(-1), int(1), int(1), z()],
        ],
        vec![rat(1, 4); 4],
    )
}

/// Five-stage third-order method with nodes (0, 1/2, 1, 0, 1).
pub fn paper_c5s3() -> ButcherTableau {
    tableau(
        "paper_c5s3",
        vec![
            vec![z(), z(), z(), z(), z()],
            vec![rat(1, 2), z(), z(), z(), z()],
            vec![int(1), z(), z(), z(), z()],
            vec![int(1), z(), int(-1), z(), z()],
            vec![int(-3), int(2), int(1), int(1), z()],
        ],
        vec![z(), rat(2, 3), z(), rat(1, 6), rat(1, 6)],
    )
}

/// Confluent three-stage method whose stability polynomial is 1 + z − (3/2)z³.
pub fn paper_counterex() -> ButcherTableau {
    tableau(
        "paper_counterex",
        vec![
            vec![z(), z(), z()],
            vec![int(1), z(), z()],
            vec![int(1), int(-1), z()],
        ],
        vec![rat(-1, 2), z(), rat(3, 2)],
    )
}

pub fn paper_testmethod() -> ButcherTableau {
    tableau(
        "paper_testmethod",
        vec![
            vec![z(), z(), z()],
            vec![rat(3, 8), z(), z()],
            vec![int(-1), int(2), z()],
        ],
        vec![rat(1, 22), rat(8, 11), rat(5, 22)],
    )
}

pub fn implicit_midpoint() -> ButcherTableau {
    tableau("implicit_midpoint", vec![vec![rat(1, 2)]], vec![int(1)])
}

/// Two-stage Lobatto IIIA (trapezoidal rule); analysis only.
pub fn lobatto3a2() -> ButcherTableau {
    tableau(
        "lobatto3a2",
        vec![vec![z(), z()], vec![rat(1, 2), rat(1, 2)]],
        vec![rat(1, 2), rat(1, 2)],
    )
}

pub fn builtin(name: &str) -> Option<ButcherTableau> {
    Some(match name {
        "ssprk33" => ssprk33(),
        "ssprk104" => ssprk104(),
        "midpoint" => midpoint(),
        "euler" => euler(),
        "paper_c4s2" => paper_c4s2(),
        "paper_c5s3" => paper_c5s3(),
        "paper_counterex" => paper_counterex(),
        "paper_testmethod" => paper_testmethod(),
        "implicit_midpoint" => implicit_midpoint(),
        "lobatto3a2" => lobatto3a2(),
        _ => return None,
    })
}

/// A named set of tableaux. The suite runs against a `Catalog` so that
/// coefficients can be swapped out in fault-injection tests.
#[derive(Debug, Clone)]
pub struct Catalog {
    methods: BTreeMap<String, ButcherTableau>,
}

impl Catalog {
    pub fn builtin() -> Self {
        let methods = BUILTIN_NAMES
            .iter()
            .map(|&n| (n.to_string(), builtin(n).expect("listed name")))
            .collect();
        Catalog { methods }
    }

    pub fn empty() -> Self {
        Catalog {
            methods: BTreeMap::new(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&ButcherTableau> {
        self.methods.get(name)
    }

    /// Looks `name` up in the catalog, panicking on absence. For the suite,
    /// which only addresses built-in names.
    pub fn method(&self, name: &str) -> &ButcherTableau {
        self.get(name)
            .unwrap_or_else(|| panic!("catalog has no method `{name}`"))
    }

    pub fn insert(&mut self, tab: ButcherTableau) {
        self.methods.insert(tab.name().to_string(), tab);
    }

    pub fn iter(&self) -> impl Iterator<Item = &ButcherTableau> {
        self.methods.values()
    }

    /// Catalog name first, then a tableau file path.
    pub fn resolve(&self, spec: &str) -> Result<ButcherTableau, ResolveError> {
        if let Some(tab) = self.get(spec) {
            return Ok(tab.clone());
        }
        let path = Path::new(spec);
        if path.is_file() {
            let text = std::fs::read_to_string(path)
                .map_err(|_| ResolveError::Unknown(spec.to_string()))?;
            return parse_tableau(&text).map_err(|source| ResolveError::Parse {
                path: spec.to_string(),
                source,
            });
        }
        Err(ResolveError::Unknown(spec.to_string()))
    }
}

impl Default for Catalog {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tableau::validate;

    #[test]
    fn every_builtin_is_consistent_with_row_sums() {
        for tab in Catalog::builtin().iter() {
            let r = validate(tab);
            assert!(r.consistent, "{}", tab.name());
            assert!(r.row_sums_hold(), "{}", tab.name());
        }
    }

    #[test]
    fn explicitness_of_builtins() {
        let cat = Catalog::builtin();
        for name in BUILTIN_NAMES {
            let explicit = !matches!(name, "implicit_midpoint" | "lobatto3a2");
            assert_eq!(cat.method(name).is_explicit(), explicit, "{name}");
        }
    }

    #[test]
    fn printed_nodes() {
        assert_eq!(ssprk33().c(), &[int(0), int(1), rat(1, 2)]);
        assert_eq!(paper_c4s2().c(), &[int(0), int(1), int(0), int(1)]);
        assert_eq!(
            paper_c5s3().c(),
            &[int(0), rat(1, 2), int(1), int(0), int(1)]
        );
        assert_eq!(paper_counterex().c(), &[int(0), int(1), int(0)]);
        assert_eq!(paper_testmethod().c(), &[int(0), rat(3, 8), int(1)]);
        let c104: Vec<Rational> = [0, 1, 2, 3, 4, 2, 3, 4, 5, 6].iter().map(|&k| rat(k, 6)).collect();
        assert_eq!(ssprk104().c(), c104.as_slice());
    }

    #[test]
    fn resolve_unknown_and_file() {
        let cat = Catalog::builtin();
        assert!(matches!(cat.resolve("nosuchmethod"), Err(ResolveError::Unknown(_))));
        let dir = std::env::temp_dir().join(format!("rkenergy-resolve-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("euler.tab");
        std::fs::write(&path, euler().to_text()).unwrap();
        let tab = cat.resolve(path.to_str().unwrap()).unwrap();
        assert_eq!(tab, euler());
        std::fs::remove_dir_all(&dir).ok();
    }
}
