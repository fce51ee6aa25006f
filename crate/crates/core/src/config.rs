//! TOML configuration for spacetimes, maps, flows and generator fields.
//!
//! Spacetime files carry the dimension, coordinate names, the lower triangle
//! of the metric as expression strings keyed `g_<i>_<j>`, the orientation
//! vector field, and optional named parameters with default values.

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use crate::exprs::{Bindings, Expr, ExprError};
use crate::flows::FlowFamily;
use crate::generators::VectorFieldDef;
use crate::geometry::SpacetimeModel;
use crate::relations::DiffeoMap;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("toml parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("in expression for `{key}`: {source}")]
    Expr {
        key: String,
        #[source]
        source: ExprError,
    },
    #[error("metric entry `{0}` has indices outside 0..{1}")]
    MetricIndex(String, usize),
    #[error("metric key `{0}` is not of the form g_<i>_<j>")]
    MetricKey(String),
    #[error("orientation has {found} components, expected {expected}")]
    OrientationShape { found: usize, expected: usize },
    #[error("map lists {found} target coordinates, expected {expected}")]
    MapShape { found: usize, expected: usize },
    #[error("flow parameter `{0}` does not appear in the map expressions")]
    UnusedFlowParameter(String),
    #[error("s_interval must contain 0")]
    BadInterval,
}

fn parse_expr(key: &str, src: &str) -> Result<Expr, ConfigError> {
    Expr::parse(src).map_err(|source| ConfigError::Expr {
        key: key.to_string(),
        source,
    })
}

#[derive(Debug, Deserialize)]
struct SpacetimeToml {
    name: String,
    dimension: usize,
    coordinates: Vec<String>,
    metric: BTreeMap<String, String>,
    orientation: Vec<String>,
    #[serde(default)]
    parameters: BTreeMap<String, f64>,
}

/// Parses a spacetime description. Only the lower triangle of the metric is
/// required; missing entries are zero and symmetry fills the rest.
pub fn spacetime_from_toml(src: &str) -> Result<SpacetimeModel, ConfigError> {
    let cfg: SpacetimeToml = toml::from_str(src)?;
    let n = cfg.dimension;
    let mut metric = vec![vec![Expr::Const(0.0); n]; n];
    for (key, val) in &cfg.metric {
        let parts: Vec<&str> = key.split('_').collect();
        if parts.len() != 3 || parts[0] != "g" {
            return Err(ConfigError::MetricKey(key.clone()));
        }
        let i: usize = parts[1]
            .parse()
            .map_err(|_| ConfigError::MetricKey(key.clone()))?;
        let j: usize = parts[2]
            .parse()
            .map_err(|_| ConfigError::MetricKey(key.clone()))?;
        if i >= n || j >= n {
            return Err(ConfigError::MetricIndex(key.clone(), n));
        }
        let e = parse_expr(key, val)?;
        metric[i][j] = e.clone();
        metric[j][i] = e;
    }
    if cfg.orientation.len() != n {
        return Err(ConfigError::OrientationShape {
            found: cfg.orientation.len(),
            expected: n,
        });
    }
    let orientation = cfg
        .orientation
        .iter()
        .enumerate()
        .map(|(i, s)| parse_expr(&format!("orientation[{}]", i), s))
        .collect::<Result<Vec<_>, _>>()?;
    let mut defaults = Bindings::new();
    for (k, v) in cfg.parameters {
        defaults.insert(k, v);
    }
    Ok(SpacetimeModel {
        name: cfg.name,
        dim: n,
        coords: cfg.coordinates,
        metric,
        orientation,
        defaults,
    })
}

#[derive(Debug, Deserialize)]
struct MapToml {
    target_coordinates: Vec<String>,
    #[serde(default)]
    inverse: Vec<String>,
    #[serde(default)]
    parameters: BTreeMap<String, f64>,
}

/// Parses a coordinate map with respect to a source model.
pub fn map_from_toml(src: &str, source: &SpacetimeModel) -> Result<DiffeoMap, ConfigError> {
    let cfg: MapToml = toml::from_str(src)?;
    if cfg.target_coordinates.len() != source.dim {
        return Err(ConfigError::MapShape {
            found: cfg.target_coordinates.len(),
            expected: source.dim,
        });
    }
    let exprs = cfg
        .target_coordinates
        .iter()
        .enumerate()
        .map(|(i, s)| parse_expr(&format!("target_coordinates[{}]", i), s))
        .collect::<Result<Vec<_>, _>>()?;
    let mut map = DiffeoMap::new(exprs, &source.coords);
    if !cfg.inverse.is_empty() {
        map.inverse = Some(
            cfg.inverse
                .iter()
                .enumerate()
                .map(|(i, s)| parse_expr(&format!("inverse[{}]", i), s))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    let mut params = Bindings::new();
    for (k, v) in cfg.parameters {
        params.insert(k, v);
    }
    Ok(map.with_params(params))
}

#[derive(Debug, Deserialize)]
struct FlowToml {
    target_coordinates: Vec<String>,
    #[serde(default = "default_flow_param")]
    flow_parameter: String,
    #[serde(default = "default_interval")]
    s_interval: (f64, f64),
    #[serde(default = "default_true")]
    group: bool,
    #[serde(default)]
    parameters: BTreeMap<String, f64>,
}

fn default_flow_param() -> String {
    "s".into()
}
fn default_interval() -> (f64, f64) {
    (-1.0, 1.0)
}
fn default_true() -> bool {
    true
}

/// Parses a one-parameter family of maps.
pub fn flow_from_toml(src: &str, source: &SpacetimeModel) -> Result<FlowFamily, ConfigError> {
    let cfg: FlowToml = toml::from_str(src)?;
    if cfg.target_coordinates.len() != source.dim {
        return Err(ConfigError::MapShape {
            found: cfg.target_coordinates.len(),
            expected: source.dim,
        });
    }
    if !(cfg.s_interval.0 <= 0.0 && cfg.s_interval.1 >= 0.0) {
        return Err(ConfigError::BadInterval);
    }
    let exprs = cfg
        .target_coordinates
        .iter()
        .enumerate()
        .map(|(i, s)| parse_expr(&format!("target_coordinates[{}]", i), s))
        .collect::<Result<Vec<_>, _>>()?;
    let uses_param = exprs
        .iter()
        .any(|e| e.variables().contains(&cfg.flow_parameter));
    if !uses_param {
        return Err(ConfigError::UnusedFlowParameter(cfg.flow_parameter));
    }
    let mut params = Bindings::new();
    for (k, v) in cfg.parameters {
        params.insert(k, v);
    }
    Ok(FlowFamily {
        map: DiffeoMap::new(exprs, &source.coords).with_params(params),
        param: cfg.flow_parameter,
        interval: cfg.s_interval,
        group: cfg.group,
    })
}

#[derive(Debug, Deserialize)]
struct GeneratorToml {
    vector_field: Vec<String>,
}

/// Parses a vector field definition.
pub fn generator_from_toml(src: &str) -> Result<VectorFieldDef, ConfigError> {
    let cfg: GeneratorToml = toml::from_str(src)?;
    let comps = cfg
        .vector_field
        .iter()
        .enumerate()
        .map(|(i, s)| parse_expr(&format!("vector_field[{}]", i), s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(VectorFieldDef { comps })
}

/// Serializes a model back to the spacetime file format (lower triangle).
pub fn spacetime_to_toml(model: &SpacetimeModel) -> String {
    let mut out = String::new();
    out.push_str(&format!("name = {:?}\n", model.name));
    out.push_str(&format!("dimension = {}\n", model.dim));
    let coords: Vec<String> = model.coords.iter().map(|c| format!("{:?}", c)).collect();
    out.push_str(&format!("coordinates = [{}]\n", coords.join(", ")));
    let orient: Vec<String> = model
        .orientation
        .iter()
        .map(|e| format!("{:?}", e.to_string()))
        .collect();
    out.push_str(&format!("orientation = [{}]\n", orient.join(", ")));
    if !model.defaults.is_empty() {
        out.push_str("\n[parameters]\n");
        let mut keys: Vec<&String> = model.defaults.keys().collect();
        keys.sort();
        for k in keys {
            out.push_str(&format!("{} = {}\n", k, model.defaults[k]));
        }
    }
    out.push_str("\n[metric]\n");
    for i in 0..model.dim {
        for j in 0..=i {
            let e = &model.metric[i][j];
            if matches!(e, Expr::Const(c) if *c == 0.0) {
                continue;
            }
            out.push_str(&format!("g_{}_{} = {:?}\n", i, j, e.to_string()));
        }
    }
    out
}
