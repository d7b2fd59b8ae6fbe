//! JSON parameter files.

use catmmv::model::{
    validate, CatastropheParams, ClaimDistribution, LoadingParams, MarketParams, ModelParams,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Market {
    pub mu0: f64,
    pub sigma0: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Loadings {
    pub kappa: f64,
    pub kappa_r: f64,
    pub iota: f64,
    pub iota_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Catastrophe {
    pub rho: f64,
    pub delta: f64,
    pub k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dist {
    Exponential,
    Gamma,
}

/// A claim law; `shape` is read only for `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Claim {
    pub dist: Dist,
    pub rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Claims {
    pub ordinary: Claim,
    pub catastrophe: Claim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Horizon {
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(default)]
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Initial {
    pub x0: f64,
    pub lambda0: f64,
    #[serde(default = "one")]
    pub y0: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub market: Market,
    pub loadings: Loadings,
    pub catastrophe: Catastrophe,
    pub claims: Claims,
    pub theta: f64,
    pub horizon: Horizon,
    pub initial: Initial,
}

impl Default for Config {
    /// The reference parameter set.
    fn default() -> Self {
        Config {
            market: Market { mu0: 0.03, sigma0: 0.4, r: 0.01 },
            loadings: Loadings { kappa: 0.1, kappa_r: 0.105, iota: 0.1, iota_r: 0.12 },
            catastrophe: Catastrophe { rho: 0.01, delta: 0.01, k: 1e4 },
            claims: Claims {
                ordinary: Claim { dist: Dist::Exponential, rate: 0.2, shape: None },
                catastrophe: Claim { dist: Dist::Exponential, rate: 0.3, shape: None },
            },
            theta: 1.0,
            horizon: Horizon { t: 100.0, s: 0.0 },
            initial: Initial { x0: 100.0, lambda0: 1.0, y0: 1.0 },
        }
    }
}

fn claim(c: &Claim, field: &str) -> Result<ClaimDistribution, CliError> {
    match c.dist {
        Dist::Exponential => {
            if c.shape.is_some() {
                return Err(CliError::Usage(format!("{field}.shape is only valid for gamma")));
            }
            if !(c.rate > 0.0 && c.rate.is_finite()) {
                return Err(CliError::Usage(format!("{field}.rate must be > 0")));
            }
            Ok(ClaimDistribution::exponential(c.rate))
        }
        Dist::Gamma => {
            let shape = c.shape.ok_or_else(|| CliError::Usage(format!("{field}.shape is required for gamma")))?;
            Ok(ClaimDistribution::gamma(shape, c.rate)?)
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn to_params(&self) -> Result<ModelParams, CliError> {
        let p = ModelParams {
            market: MarketParams { mu0: self.market.mu0, sigma0: self.market.sigma0, r: self.market.r },
            loadings: LoadingParams {
                kappa: self.loadings.kappa,
                kappa_r: self.loadings.kappa_r,
                iota: self.loadings.iota,
                iota_r: self.loadings.iota_r,
            },
            cat: CatastropheParams { rho: self.catastrophe.rho, delta: self.catastrophe.delta, k: self.catastrophe.k },
            f1: claim(&self.claims.ordinary, "claims.ordinary")?,
            f2: claim(&self.claims.catastrophe, "claims.catastrophe")?,
            theta: self.theta,
            t_end: self.horizon.t,
            s: self.horizon.s,
            x0: self.initial.x0,
            lambda0: self.initial.lambda0,
            y0: self.initial.y0,
        };
        Ok(validate(p)?)
    }

    /// Copy with the numeric field at dotted path `name` (e.g. `catastrophe.rho`) replaced.
    pub fn with_value(&self, name: &str, value: f64) -> Result<Self, CliError> {
        let mut v = serde_json::to_value(self).expect("config serializes");
        let pointer = format!("/{}", name.replace('.', "/"));
        match v.pointer_mut(&pointer) {
            Some(slot) if slot.is_number() => {
                *slot = serde_json::Number::from_f64(value)
                    .map(Value::Number)
                    .ok_or_else(|| CliError::Usage(format!("{name} = {value} is not a finite number")))?;
            }
            _ => return Err(CliError::Usage(format!("unknown numeric parameter '{name}'"))),
        }
        serde_json::from_value(v).map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = Config::default();
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"T\":100.0"));
        assert_eq!(Config::from_json(&s).unwrap(), c);
        c.to_params().unwrap();
    }

    #[test]
    fn unknown_fields_rejected() {
        let s = serde_json::to_string(&Config::default()).unwrap().replace("\"theta\"", "\"theta2\"");
        assert!(Config::from_json(&s).is_err());
    }

    #[test]
    fn dotted_override() {
        let c = Config::default().with_value("catastrophe.rho", 0.02).unwrap();
        assert_eq!(c.catastrophe.rho, 0.02);
        assert!(Config::default().with_value("catastrophe.nope", 1.0).is_err());
        assert!(Config::default().with_value("claims.ordinary.dist", 1.0).is_err());
    }
}
