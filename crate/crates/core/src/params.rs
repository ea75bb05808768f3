//! Physical constants of the neuron-astrocyte model and their flat
//! `name = value` text representation.
//!
//! Units follow the model convention throughout: time in ms, voltage in mV,
//! concentrations in mM, currents in µA/cm², areas in µm², volumes in µm³.
//! `omega_e` and `k_tot` are derived and recomputed on every construction.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

macro_rules! parameter_set {
    ($( $(#[$doc:meta])* $name:ident = $default:expr ),* $(,)?) => {
        #[derive(Debug, Clone, PartialEq, Serialize)]
        pub struct ParameterSet {
            $( $(#[$doc])* pub $name: f64, )*
            /// Extracellular volume, α₀(Ω_n + Ω_a).
            pub omega_e: f64,
            /// Total K⁺ ion amount fixed by the nominal rest concentrations.
            pub k_tot: f64,
        }

        impl ParameterSet {
            /// Names of the independent (file-settable) parameters, in file order.
            pub const NAMES: &'static [&'static str] = &[$(stringify!($name)),*];

            fn raw_defaults() -> Self {
                ParameterSet { $( $name: $default, )* omega_e: 0.0, k_tot: 0.0 }
            }

            pub fn get(&self, name: &str) -> Option<f64> {
                match name {
                    $( stringify!($name) => Some(self.$name), )*
                    "omega_e" => Some(self.omega_e),
                    "k_tot" => Some(self.k_tot),
                    _ => None,
                }
            }

            fn set_raw(&mut self, name: &str, value: f64) -> bool {
                match name {
                    $( stringify!($name) => { self.$name = value; true } )*
                    _ => false,
                }
            }
        }
    };
}

parameter_set! {
    /// Gas constant (J/mol·K).
    r_gas = 8.31,
    /// Faraday constant (C/mol).
    faraday = 96485.0,
    /// Temperature (K).
    temperature = 310.0,
    cm = 1.0,
    cm_a = 1.0,
    phi_n = 0.8,
    phi_hp = 0.05,
    g_na = 50.0,
    g_nap = 0.8,
    g_k = 15.0,
    g_l = 0.5,
    e_l = -70.0,
    s_n = 922.0,
    s_a = 1600.0,
    omega_n = 2160.0,
    omega_a = 2000.0,
    alpha0 = 0.2,
    /// K⁺ diffusion coefficient (cm²/s).
    d_k = 1.96e-5,
    /// Na⁺ diffusion coefficient (cm²/s).
    d_na = 1.33e-5,
    /// Cell spacing (mm).
    dx = 0.044,
    /// Astrocyte membrane permeabilities (cm/s).
    p_k = 1e-6,
    p_na = 1.5e-8,
    rho_n = 5.0,
    rho_a = 5.0,
    v_m = -34.0,
    theta_m = 5.0,
    v_n = -55.0,
    theta_n = 14.0,
    v_mp = -40.0,
    theta_mp = 6.0,
    v_hp = -48.0,
    theta_hp = -6.0,
    /// Pump half-saturation constants (mM).
    k_k = 2.0,
    k_na = 7.7,
    k_k_a = 2.0,
    k_na_a = 7.7,
    /// Frozen concentrations of the reduced model (mM).
    na_i = 3.5,
    na_i_a = 3.5,
    na_e = 135.0,
    k_i_a = 135.0,
    /// Nominal rest concentrations that fix the K⁺ total (mM).
    k_e_rest = 3.5,
    k_i_rest = 135.0,
    /// Persistent-Na⁺ inactivation held fixed in the reduced model.
    hp_frozen = 0.9751,
    /// Power of the persistent-Na⁺ activation m_p∞ in I_NaP.
    nap_exponent = 1.0,
}

impl Default for ParameterSet {
    fn default() -> Self {
        Self::raw_defaults().finish().expect("default parameters are valid")
    }
}

const POSITIVE: &[&str] = &[
    "r_gas", "faraday", "temperature", "cm", "cm_a", "phi_n", "phi_hp", "g_na", "g_nap", "g_k",
    "g_l", "s_n", "s_a", "omega_n", "omega_a", "alpha0", "d_k", "d_na", "dx", "p_k", "p_na",
    "k_k", "k_na", "k_k_a", "k_na_a", "na_i", "na_i_a", "na_e", "k_i_a", "k_e_rest", "k_i_rest",
];

impl ParameterSet {
    /// Recomputes derived quantities and checks positivity constraints.
    fn finish(mut self) -> Result<Self> {
        for &name in POSITIVE {
            let v = self.get(name).unwrap_or(f64::NAN);
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        for &name in Self::NAMES {
            if !self.get(name).unwrap_or(f64::NAN).is_finite() {
                return Err(Error::Config(format!("{name} is not finite")));
            }
        }
        if self.nap_exponent.fract() != 0.0 || self.nap_exponent < 1.0 {
            return Err(Error::Config("nap_exponent must be a positive integer".into()));
        }
        if self.theta_m == 0.0 || self.theta_n == 0.0 || self.theta_mp == 0.0 || self.theta_hp == 0.0 {
            return Err(Error::Config("gating slopes must be nonzero".into()));
        }
        self.omega_e = self.alpha0 * (self.omega_n + self.omega_a);
        self.k_tot =
            self.omega_e * self.k_e_rest + self.omega_n * self.k_i_rest + self.omega_a * self.k_i_a;
        Ok(self)
    }

    /// Returns a copy with one independent parameter replaced.
    pub fn with(&self, name: &str, value: f64) -> Result<Self> {
        let mut p = self.clone();
        if !p.set_raw(name, value) {
            return Err(Error::Config(format!("unknown or derived parameter `{name}`")));
        }
        p.finish()
    }

    /// RT/F in mV.
    pub fn rt_over_f_mv(&self) -> f64 {
        1000.0 * self.r_gas * self.temperature / self.faraday
    }

    /// Parses the `name = value` format. Blank lines and `#` comments are
    /// skipped; keys not listed override nothing and fall back to defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut p = Self::raw_defaults();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                detail: format!("expected `name = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value: f64 = value.trim().parse().map_err(|e| Error::Parse {
                line: i + 1,
                detail: format!("bad number for `{key}`: {e}"),
            })?;
            if !p.set_raw(key, value) {
                return Err(Error::Parse {
                    line: i + 1,
                    detail: format!("unknown or derived parameter `{key}`"),
                });
            }
        }
        p.finish()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Serializes every independent parameter with 17 significant digits;
    /// derived values are appended as comments.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for &name in Self::NAMES {
            let _ = writeln!(out, "{name} = {:.16e}", self.get(name).unwrap());
        }
        let _ = writeln!(out, "# omega_e = {:.16e}", self.omega_e);
        let _ = writeln!(out, "# k_tot = {:.16e}", self.k_tot);
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// K⁺ diffusion coefficient converted to mm²/ms.
    pub fn d_k_mm2_per_ms(&self) -> f64 {
        self.d_k * 100.0 / 1000.0
    }

    pub fn d_na_mm2_per_ms(&self) -> f64 {
        self.d_na * 100.0 / 1000.0
    }

    /// Converts a wave-ODE speed c (ms^-1/2) into a propagation velocity in
    /// mm/min, using vel = c·√D_K.
    pub fn velocity_mm_per_min(&self, c: f64) -> f64 {
        // √(mm²/ms)·ms^-1/2 = mm/ms
        c * self.d_k_mm2_per_ms().sqrt() * 60_000.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_volume_is_exact() {
        let p = ParameterSet::default();
        assert_eq!(p.omega_e, p.alpha0 * (p.omega_n + p.omega_a));
        let q = p.with("alpha0", 0.1).unwrap();
        assert_eq!(q.omega_e, 0.1 * (q.omega_n + q.omega_a));
    }

    #[test]
    fn text_round_trip() {
        let p = ParameterSet::default().with("rho_n", 4.25).unwrap();
        let q = ParameterSet::parse(&p.to_text()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(ParameterSet::parse("g_k 15"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(ParameterSet::parse("nope = 1"), Err(Error::Parse { .. })));
        assert!(matches!(ParameterSet::parse("omega_e = 1"), Err(Error::Parse { .. })));
        assert!(ParameterSet::parse("g_k = -1").is_err());
        assert!(ParameterSet::parse("# comment\n\ng_k = 14 # trailing\n").is_ok());
    }

    #[test]
    fn velocity_conversion() {
        let p = ParameterSet::default();
        // 0.073135·√1.96 mm/s = 0.102389 mm/s
        assert!((p.velocity_mm_per_min(0.073135) - 6.1433).abs() < 1e-3);
    }
}
