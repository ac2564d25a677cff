use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Adjacency, GibbsModel, Potential, Scheme};
use crate::error::{Error, Result};
use crate::simplex::StateSpace;

/// Model description as read from TOML.
///
/// ```toml
/// kind = "linear_quadratic"
/// labels = ["a", "b", "c"]          # optional
/// v = [0.0, 0.5, 1.0]
/// w = [[0, 1, 0], [1, 0, 1], [0, 1, 0]]
/// scheme = "sqrt_pi"                 # or "metropolis"
/// adjacency = "complete"             # "path", "cycle" or a matrix
/// ```
///
/// `kind = "curie_weiss"` takes `beta`; `kind = "free"` takes `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    LinearQuadratic {
        #[serde(default)]
        labels: Option<Vec<String>>,
        v: Vec<f64>,
        w: Vec<Vec<f64>>,
        #[serde(default)]
        scheme: Scheme,
        #[serde(default)]
        adjacency: AdjacencyConfig,
    },
    CurieWeiss {
        beta: f64,
        #[serde(default)]
        scheme: Scheme,
    },
    Free {
        d: usize,
        #[serde(default)]
        scheme: Scheme,
        #[serde(default)]
        adjacency: AdjacencyConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AdjacencyConfig {
    Named(String),
    Matrix(Vec<Vec<f64>>),
}

impl Default for AdjacencyConfig {
    fn default() -> Self {
        AdjacencyConfig::Named("complete".into())
    }
}

impl AdjacencyConfig {
    fn build(&self, d: usize, path: &str) -> Result<Adjacency> {
        match self {
            AdjacencyConfig::Named(name) => match name.as_str() {
                "complete" => Ok(Adjacency::Complete),
                "path" => Ok(Adjacency::path(d)),
                "cycle" => Ok(Adjacency::cycle(d)),
                other => Err(Error::config(path, format!("unknown adjacency `{other}` (expected complete, path, cycle or a matrix)"))),
            },
            AdjacencyConfig::Matrix(rows) => Ok(Adjacency::Fixed(square(rows, d, path)?)),
        }
    }
}

fn square(rows: &[Vec<f64>], d: usize, path: &str) -> Result<DMatrix<f64>> {
    if rows.len() != d {
        return Err(Error::config(path, format!("expected {d} rows, got {}", rows.len())));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(Error::config(format!("{path}[{i}]"), format!("expected {d} entries, got {}", r.len())));
        }
    }
    Ok(DMatrix::from_fn(d, d, |x, y| rows[x][y]))
}

impl ModelConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::config("model", e.to_string()))
    }

    /// Builds the model; `prefix` names the config location in error messages.
    pub fn build(&self, prefix: &str) -> Result<GibbsModel> {
        let at = |field: &str| format!("{prefix}.{field}");
        match self {
            ModelConfig::LinearQuadratic { labels, v, w, scheme, adjacency } => {
                let d = v.len();
                let space = match labels {
                    Some(l) if l.len() != d => {
                        return Err(Error::config(at("labels"), format!("expected {d} labels, got {}", l.len())))
                    }
                    Some(l) => StateSpace::new(l.clone()).map_err(|e| Error::config(at("labels"), e.to_string()))?,
                    None => StateSpace::numbered(d).map_err(|e| Error::config(at("v"), e.to_string()))?,
                };
                let w = square(w, d, &at("w"))?;
                let potential = Potential::linear_quadratic(v.clone(), w).map_err(|e| Error::config(at("w"), e.to_string()))?;
                let adjacency = adjacency.build(d, &at("adjacency"))?;
                GibbsModel::new(space, potential, adjacency, *scheme).map_err(|e| Error::config(prefix, e.to_string()))
            }
            ModelConfig::CurieWeiss { beta, scheme } => {
                if !beta.is_finite() {
                    return Err(Error::config(at("beta"), "must be finite"));
                }
                GibbsModel::curie_weiss(*beta, *scheme)
            }
            ModelConfig::Free { d, scheme, adjacency } => {
                let space = StateSpace::numbered(*d).map_err(|e| Error::config(at("d"), e.to_string()))?;
                let adjacency = adjacency.build(*d, &at("adjacency"))?;
                GibbsModel::new(space, Potential::zero(*d), adjacency, *scheme).map_err(|e| Error::config(prefix, e.to_string()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::Dist;

    #[test]
    fn parses_linear_quadratic() {
        let cfg = ModelConfig::from_toml_str(
            r#"
            kind = "linear_quadratic"
            labels = ["a", "b", "c"]
            v = [0.0, 0.5, 1.0]
            w = [[0, 1, 0], [1, 0, 1], [0, 1, 0]]
            scheme = "metropolis"
            adjacency = "path"
            "#,
        )
        .unwrap();
        let model = cfg.build("model").unwrap();
        assert_eq!(model.d(), 3);
        assert_eq!(model.scheme(), Scheme::Metropolis);
        assert_eq!(model.edge_set(&Dist::uniform(3)).unwrap().len(), 4);
    }

    #[test]
    fn parses_presets_and_matrix_adjacency() {
        let cw = ModelConfig::from_toml_str("kind = \"curie_weiss\"\nbeta = 2.0\n").unwrap();
        assert_eq!(cw.build("model").unwrap().energy(&Dist::uniform(2)), 1.0);
        let free = ModelConfig::from_toml_str("kind = \"free\"\nd = 3\nadjacency = [[0, 2, 0], [2, 0, 1], [0, 1, 0]]\n").unwrap();
        let q = free.build("model").unwrap().rates(&Dist::uniform(3)).unwrap();
        assert_eq!(q.get(0, 1), 2.0);
        assert_eq!(q.get(0, 2), 0.0);
    }

    #[test]
    fn rejects_unknown_keys_and_reports_paths() {
        assert!(ModelConfig::from_toml_str("kind = \"curie_weiss\"\nbeta = 2.0\nbta = 1\n").is_err());
        let bad = ModelConfig::from_toml_str("kind = \"linear_quadratic\"\nv = [0, 0]\nw = [[0, 1], [2, 0]]\n").unwrap();
        match bad.build("model") {
            Err(Error::Config { path, .. }) => assert_eq!(path, "model.w"),
            other => panic!("unexpected {other:?}"),
        }
        let short = ModelConfig::from_toml_str("kind = \"linear_quadratic\"\nv = [0, 0]\nw = [[0, 1], [1]]\n").unwrap();
        match short.build("model") {
            Err(Error::Config { path, .. }) => assert_eq!(path, "model.w[1]"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
