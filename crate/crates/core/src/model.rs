//! Biophysical functions of the neuron-astrocyte model: gating, reversal
//! potentials, GHK and pump currents, the reduced right-hand sides
//! f̃(x, z), g̃(y, z), h(x, y, z), their partial derivatives, the 4D
//! traveling-wave field and the 10-variable single-cell model.
//!
//! x = V_N (mV), y = V_A (mV), z = [K⁺]_e (mM), w = dz/dξ.

use nalgebra::Matrix4;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::jet::{ghk_kernel_d1, Jet, Real};
use crate::params::ParameterSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Gate {
    M,
    N,
    Mp,
    Hp,
}

impl Gate {
    fn constants(self, p: &ParameterSet) -> (f64, f64) {
        match self {
            Gate::M => (p.v_m, p.theta_m),
            Gate::N => (p.v_n, p.theta_n),
            Gate::Mp => (p.v_mp, p.theta_mp),
            Gate::Hp => (p.v_hp, p.theta_hp),
        }
    }
}

/// Point of the traveling-wave ODE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaveState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl WaveState {
    pub fn new(x: f64, y: f64, z: f64, w: f64) -> Self {
        WaveState { x, y, z, w }
    }
    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.z, self.w]
    }
}

impl From<[f64; 4]> for WaveState {
    fn from(a: [f64; 4]) -> Self {
        WaveState::new(a[0], a[1], a[2], a[3])
    }
}

/// Steady-state activation X_∞(V) = 1/(1 + e^{−(V−V_X)/θ_X}).
pub fn gating_inf<T: Real>(v: &T, gate: Gate, p: &ParameterSet) -> T {
    let (vx, th) = gate.constants(p);
    ((v.clone() - vx) / th).sigmoid()
}

/// d X_∞/dV.
pub fn gating_inf_d1(v: f64, gate: Gate, p: &ParameterSet) -> f64 {
    let (_, th) = gate.constants(p);
    let g = gating_inf(&v, gate, p);
    g * (1.0 - g) / th
}

/// Nernst potential in mV.
pub fn nernst(xe: f64, xi: f64, p: &ParameterSet) -> Result<f64> {
    if !(xe > 0.0 && xi > 0.0) {
        return Err(Error::domain("nernst", format!("concentrations must be positive ({xe}, {xi})")));
    }
    Ok(p.rt_over_f_mv() * (xe / xi).ln())
}

/// GHK current P·F·φ(Xe e^{−φ} − Xi)/(e^{−φ} − 1) with φ = F V/(RT),
/// written as P·F·κ(φ)·(Xe e^{−φ} − Xi).
pub fn ghk_current<T: Real>(v: &T, xe: &T, xi: &T, perm: f64, p: &ParameterSet) -> Result<T> {
    if !(xe.value() > 0.0 && xi.value() > 0.0) {
        return Err(Error::domain(
            "ghk_current",
            format!("concentrations must be positive ({}, {})", xe.value(), xi.value()),
        ));
    }
    Ok(ghk_unchecked(v, xe, xi, perm, p))
}

fn ghk_unchecked<T: Real>(v: &T, xe: &T, xi: &T, perm: f64, p: &ParameterSet) -> T {
    let phi = v.clone() / p.rt_over_f_mv();
    let kappa = phi.ghk_kernel();
    kappa * (xe.clone() * (-phi).exp() - xi.clone()) * (perm * p.faraday)
}

/// (∂/∂V, ∂/∂Xe) of the GHK current.
pub fn ghk_current_d1(v: f64, xe: f64, xi: f64, perm: f64, p: &ParameterSet) -> (f64, f64) {
    let rtf = p.rt_over_f_mv();
    let phi = v / rtf;
    let e = (-phi).exp();
    let kappa = phi.ghk_kernel();
    let dkappa = ghk_kernel_d1(phi);
    let pf = perm * p.faraday;
    let dphi = pf * (dkappa * (xe * e - xi) - kappa * xe * e);
    (dphi / rtf, pf * kappa * e)
}

/// Na⁺/K⁺ pump current ρ (z/(K_K+z))² (Na/(K_Na+Na))³.
pub fn pump_current<T: Real>(z: &T, nai: &T, rho: f64, k_k: f64, k_na: f64) -> T {
    let kf = z.clone() / (z.clone() + k_k);
    let nf = nai.clone() / (nai.clone() + k_na);
    kf.ipow(2) * nf.ipow(3) * rho
}

/// Neuronal pump with the model's half-saturation constants.
pub fn pump_neuron<T: Real>(z: &T, p: &ParameterSet) -> T {
    pump_current(z, &z.constant(p.na_i), p.rho_n, p.k_k, p.k_na)
}

pub fn pump_astro<T: Real>(z: &T, p: &ParameterSet) -> T {
    pump_current(z, &z.constant(p.na_i_a), p.rho_a, p.k_k_a, p.k_na_a)
}

/// d/dz of ρ (z/(K+z))² · const.
fn pump_dz(z: f64, nai: f64, rho: f64, k_k: f64, k_na: f64) -> f64 {
    let nf = nai / (nai + k_na);
    2.0 * rho * z * k_k / (z + k_k).powi(3) * nf.powi(3)
}

/// Intracellular K⁺ from ion conservation.
pub fn k_i_of_z<T: Real>(z: &T, p: &ParameterSet) -> T {
    (-(z.clone() * p.omega_e) + (p.k_tot - p.omega_a * p.k_i_a)) / p.omega_n
}

fn check_z<T: Real>(z: &T, p: &ParameterSet, op: &'static str) -> Result<()> {
    let zv = z.value();
    let ki = k_i_of_z(&zv, p);
    if !(zv > 0.0) || !(ki > 0.0) || !zv.is_finite() {
        return Err(Error::domain(op, format!("z = {zv} gives [K+]_i = {ki}")));
    }
    Ok(())
}

/// Sodium reversal potential at the frozen concentrations.
pub fn e_na(p: &ParameterSet) -> f64 {
    p.rt_over_f_mv() * (p.na_e / p.na_i).ln()
}

/// Potassium reversal potential with [K⁺]_i from conservation.
pub fn e_k<T: Real>(z: &T, p: &ParameterSet) -> T {
    (z.clone() / k_i_of_z(z, p)).ln() * p.rt_over_f_mv()
}

fn i_k<T: Real>(x: &T, z: &T, p: &ParameterSet) -> T {
    let n = gating_inf(x, Gate::N, p);
    n.ipow(4) * (x.clone() - e_k(z, p)) * p.g_k
}

fn nap_power(p: &ParameterSet) -> u32 {
    p.nap_exponent as u32
}

/// f̃(x, z): neuronal membrane equation with n = n_∞ and h_p frozen.
pub fn f_tilde<T: Real>(x: &T, z: &T, p: &ParameterSet) -> Result<T> {
    check_z(z, p, "f_tilde")?;
    Ok(f_unchecked(x, z, p))
}

fn f_unchecked<T: Real>(x: &T, z: &T, p: &ParameterSet) -> T {
    let ena = e_na(p);
    let n = gating_inf(x, Gate::N, p);
    let m = gating_inf(x, Gate::M, p);
    let mp = gating_inf(x, Gate::Mp, p);
    let i_na = m.ipow(3) * (-n + 1.0) * (x.clone() - ena) * p.g_na;
    let i_nap = mp.ipow(nap_power(p)) * (x.clone() - ena) * (p.g_nap * p.hp_frozen);
    let i_l = (x.clone() - p.e_l) * p.g_l;
    -(i_na + i_nap + i_k(x, z, p) + i_l + pump_neuron(z, p)) / p.cm
}

/// g̃(y, z): astrocytic membrane equation.
pub fn g_tilde<T: Real>(y: &T, z: &T, p: &ParameterSet) -> Result<T> {
    check_z(z, p, "g_tilde")?;
    Ok(g_unchecked(y, z, p))
}

fn g_unchecked<T: Real>(y: &T, z: &T, p: &ParameterSet) -> T {
    let i_na = ghk_unchecked(y, &y.constant(p.na_e), &y.constant(p.na_i_a), p.p_na, p);
    let i_k = ghk_unchecked(y, z, &y.constant(p.k_i_a), p.p_k, p);
    -(i_na + i_k + pump_astro(z, p)) / p.cm_a
}

/// 10 S/(F Ω_e) for neuron and astrocyte.
fn flux_factors(p: &ParameterSet) -> (f64, f64) {
    (
        10.0 * p.s_n / (p.faraday * p.omega_e),
        10.0 * p.s_a / (p.faraday * p.omega_e),
    )
}

/// h(x, y, z): net K⁺ release into the extracellular space (mM/ms).
pub fn h<T: Real>(x: &T, y: &T, z: &T, p: &ParameterSet) -> Result<T> {
    check_z(z, p, "h")?;
    Ok(h_unchecked(x, y, z, p))
}

fn h_unchecked<T: Real>(x: &T, y: &T, z: &T, p: &ParameterSet) -> T {
    let (an, aa) = flux_factors(p);
    let ik_a = ghk_unchecked(y, z, &y.constant(p.k_i_a), p.p_k, p);
    (i_k(x, z, p) - pump_neuron(z, p) * 2.0) * an + (ik_a - pump_astro(z, p) * 2.0) * aa
}

/// Analytic first partial derivatives of f̃, g̃ and h.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FirstPartials {
    pub f_x: f64,
    pub f_z: f64,
    pub g_y: f64,
    pub g_z: f64,
    pub h_x: f64,
    pub h_y: f64,
    pub h_z: f64,
}

/// dE_K/dz.
fn e_k_dz(z: f64, p: &ParameterSet) -> f64 {
    p.rt_over_f_mv() * (1.0 / z + (p.omega_e / p.omega_n) / k_i_of_z(&z, p))
}

/// ∂I_K/∂x and ∂I_K/∂z.
fn i_k_d1(x: f64, z: f64, p: &ParameterSet) -> (f64, f64) {
    let n = gating_inf(&x, Gate::N, p);
    let dn = gating_inf_d1(x, Gate::N, p);
    let ek = e_k(&z, p);
    (
        p.g_k * (4.0 * n.powi(3) * dn * (x - ek) + n.powi(4)),
        -p.g_k * n.powi(4) * e_k_dz(z, p),
    )
}

pub fn f_partials(x: f64, z: f64, p: &ParameterSet) -> Result<(f64, f64)> {
    check_z(&z, p, "f_partials")?;
    let ena = e_na(p);
    let n = gating_inf(&x, Gate::N, p);
    let dn = gating_inf_d1(x, Gate::N, p);
    let m = gating_inf(&x, Gate::M, p);
    let dm = gating_inf_d1(x, Gate::M, p);
    let mp = gating_inf(&x, Gate::Mp, p);
    let dmp = gating_inf_d1(x, Gate::Mp, p);
    let e = nap_power(p);
    let d_na = p.g_na * (3.0 * m * m * dm * (1.0 - n) * (x - ena) - m.powi(3) * dn * (x - ena) + m.powi(3) * (1.0 - n));
    let d_nap = p.g_nap
        * p.hp_frozen
        * (e as f64 * mp.powi(e as i32 - 1) * dmp * (x - ena) + mp.powi(e as i32));
    let (ik_x, ik_z) = i_k_d1(x, z, p);
    let f_x = -(d_na + d_nap + ik_x + p.g_l) / p.cm;
    let f_z = -(ik_z + pump_dz(z, p.na_i, p.rho_n, p.k_k, p.k_na)) / p.cm;
    Ok((f_x, f_z))
}

pub fn g_partials(y: f64, z: f64, p: &ParameterSet) -> Result<(f64, f64)> {
    check_z(&z, p, "g_partials")?;
    let (na_y, _) = ghk_current_d1(y, p.na_e, p.na_i_a, p.p_na, p);
    let (k_y, k_z) = ghk_current_d1(y, z, p.k_i_a, p.p_k, p);
    let g_y = -(na_y + k_y) / p.cm_a;
    let g_z = -(k_z + pump_dz(z, p.na_i_a, p.rho_a, p.k_k_a, p.k_na_a)) / p.cm_a;
    Ok((g_y, g_z))
}

pub fn h_partials(x: f64, y: f64, z: f64, p: &ParameterSet) -> Result<(f64, f64, f64)> {
    check_z(&z, p, "h_partials")?;
    let (an, aa) = flux_factors(p);
    let (ik_x, ik_z) = i_k_d1(x, z, p);
    let (ka_y, ka_z) = ghk_current_d1(y, z, p.k_i_a, p.p_k, p);
    let h_z = an * (ik_z - 2.0 * pump_dz(z, p.na_i, p.rho_n, p.k_k, p.k_na))
        + aa * (ka_z - 2.0 * pump_dz(z, p.na_i_a, p.rho_a, p.k_k_a, p.k_na_a));
    Ok((an * ik_x, aa * ka_y, h_z))
}

pub fn first_partials(x: f64, y: f64, z: f64, p: &ParameterSet) -> Result<FirstPartials> {
    let (f_x, f_z) = f_partials(x, z, p)?;
    let (g_y, g_z) = g_partials(y, z, p)?;
    let (h_x, h_y, h_z) = h_partials(x, y, z, p)?;
    Ok(FirstPartials { f_x, f_z, g_y, g_z, h_x, h_y, h_z })
}

/// Second and third partials of a function of two variables (u, z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HigherPartials {
    pub uu: f64,
    pub uz: f64,
    pub zz: f64,
    pub uuu: f64,
    pub uuz: f64,
    pub uzz: f64,
    pub zzz: f64,
}

/// Recovers mixed partials up to order 3 from jets along the directions
/// (1,0), (0,1), (1,1) and (1,−1) by polarization.
fn polarize(fun: impl Fn(&Jet, &Jet) -> Result<Jet>, u: f64, z: f64) -> Result<HigherPartials> {
    let along = |du: f64, dz: f64| -> Result<(f64, f64)> {
        let j = fun(&Jet::line(u, du, 3), &Jet::line(z, dz, 3))?;
        Ok((2.0 * j.coeff(2), 6.0 * j.coeff(3)))
    };
    let (uu, uuu) = along(1.0, 0.0)?;
    let (zz, zzz) = along(0.0, 1.0)?;
    let (d2p, d3p) = along(1.0, 1.0)?;
    let (_, d3m) = along(1.0, -1.0)?;
    // d3(1,1) = uuu + 3uuz + 3uzz + zzz, d3(1,-1) = uuu − 3uuz + 3uzz − zzz
    let uzz = (d3p + d3m - 2.0 * uuu) / 6.0;
    let uuz = (d3p - d3m - 2.0 * zzz) / 6.0;
    Ok(HigherPartials { uu, uz: (d2p - uu - zz) / 2.0, zz, uuu, uuz, uzz, zzz })
}

/// f̃_xx … f̃_zzz via jets.
pub fn f_higher(x: f64, z: f64, p: &ParameterSet) -> Result<HigherPartials> {
    polarize(|a, b| f_tilde(a, b, p), x, z)
}

/// g̃_yy … g̃_zzz via jets.
pub fn g_higher(y: f64, z: f64, p: &ParameterSet) -> Result<HigherPartials> {
    polarize(|a, b| g_tilde(a, b, p), y, z)
}

/// Generic 4D traveling-wave field (f̃/c, g̃/c, w, c w − h).
pub fn wave_field<T: Real>(s: &[T; 4], c: f64, p: &ParameterSet) -> Result<[T; 4]> {
    let [x, y, z, w] = s;
    check_z(z, p, "wave_rhs")?;
    Ok([
        f_unchecked(x, z, p) / c,
        g_unchecked(y, z, p) / c,
        w.clone(),
        w.clone() * c - h_unchecked(x, y, z, p),
    ])
}

pub fn wave_rhs(s: &WaveState, c: f64, p: &ParameterSet) -> Result<WaveState> {
    if !(c > 0.0) {
        return Err(Error::Config(format!("wave speed must be positive, got {c}")));
    }
    Ok(wave_field(&s.to_array(), c, p)?.into())
}

/// Taylor coefficients of ξ ↦ F(W(ξ)) for a jet-valued curve W.
pub fn field_jet(w: &[Jet; 4], c: f64, p: &ParameterSet) -> Result<[Jet; 4]> {
    if !(c > 0.0) {
        return Err(Error::Config(format!("wave speed must be positive, got {c}")));
    }
    wave_field(w, c, p)
}

/// Analytic Jacobian of the wave field.
pub fn wave_jacobian(s: &[f64; 4], c: f64, p: &ParameterSet) -> Result<Matrix4<f64>> {
    let d = first_partials(s[0], s[1], s[2], p)?;
    Ok(Matrix4::new(
        d.f_x / c, 0.0, d.f_z / c, 0.0,
        0.0, d.g_y / c, d.g_z / c, 0.0,
        0.0, 0.0, 0.0, 1.0,
        -d.h_x, -d.h_y, -d.h_z, c,
    ))
}

/// Reduced reaction terms (f̃, g̃, h) at a point.
pub fn reduced_rhs(x: f64, y: f64, z: f64, p: &ParameterSet) -> Result<[f64; 3]> {
    check_z(&z, p, "reduced_rhs")?;
    Ok([f_unchecked(&x, &z, p), g_unchecked(&y, &z, p), h_unchecked(&x, &y, &z, p)])
}

/// Jacobian of (f̃, g̃, h) with respect to (x, y, z).
pub fn reduced_jacobian(x: f64, y: f64, z: f64, p: &ParameterSet) -> Result<[[f64; 3]; 3]> {
    let d = first_partials(x, y, z, p)?;
    Ok([[d.f_x, 0.0, d.f_z], [0.0, d.g_y, d.g_z], [d.h_x, d.h_y, d.h_z]])
}

pub fn tau_n(v: f64) -> f64 {
    0.05 + 0.27 / (1.0 + (-(v + 40.0) / -12.0).exp())
}

pub fn tau_hp(v: f64) -> f64 {
    10000.0 / ((v + 48.0) / 12.0).cosh()
}

/// Index layout of the 10-variable single-cell state.
pub mod full {
    pub const V_N: usize = 0;
    pub const V_A: usize = 1;
    pub const N: usize = 2;
    pub const HP: usize = 3;
    pub const NA_I: usize = 4;
    pub const NA_I_A: usize = 5;
    pub const K_I: usize = 6;
    pub const K_I_A: usize = 7;
    pub const NA_E: usize = 8;
    pub const K_E: usize = 9;
    pub const NAMES: [&str; 10] =
        ["V_N", "V_A", "n", "h_p", "Na_i", "Na_i_A", "K_i", "K_i_A", "Na_e", "K_e"];
}

/// Reaction terms of the 10-variable model for one neuron-astrocyte pair,
/// without gap-junction currents. Diffusion is added by the network code.
pub fn full_model_rhs(u: &[f64; 10], p: &ParameterSet) -> Result<[f64; 10]> {
    use full::*;
    for &i in &[NA_I, NA_I_A, K_I, K_I_A, NA_E, K_E] {
        if !(u[i] > 0.0) || !u[i].is_finite() {
            return Err(Error::domain(
                "full_model_rhs",
                format!("{} = {} is not a positive concentration", NAMES[i], u[i]),
            ));
        }
    }
    let (vn, va, n, hp) = (u[V_N], u[V_A], u[N], u[HP]);
    let e_na = nernst(u[NA_E], u[NA_I], p)?;
    let e_k = nernst(u[K_E], u[K_I], p)?;
    let m = gating_inf(&vn, Gate::M, p);
    let mp = gating_inf(&vn, Gate::Mp, p);
    let i_na = p.g_na * m.powi(3) * (1.0 - n) * (vn - e_na);
    let i_nap = p.g_nap * mp.powi(nap_power(p) as i32) * hp * (vn - e_na);
    let i_k = p.g_k * n.powi(4) * (vn - e_k);
    let i_l = p.g_l * (vn - p.e_l);
    let i_pm = pump_current(&u[K_E], &u[NA_I], p.rho_n, p.k_k, p.k_na);
    let i_na_a = ghk_unchecked(&va, &u[NA_E], &u[NA_I_A], p.p_na, p);
    let i_k_a = ghk_unchecked(&va, &u[K_E], &u[K_I_A], p.p_k, p);
    let i_pm_a = pump_current(&u[K_E], &u[NA_I_A], p.rho_a, p.k_k_a, p.k_na_a);

    let bn = 10.0 * p.s_n / p.faraday;
    let ba = 10.0 * p.s_a / p.faraday;
    let mut du = [0.0; 10];
    du[V_N] = -(i_na + i_nap + i_k + i_l + i_pm) / p.cm;
    du[V_A] = -(i_na_a + i_k_a + i_pm_a) / p.cm_a;
    du[N] = p.phi_n * (gating_inf(&vn, Gate::N, p) - n) / tau_n(vn);
    du[HP] = p.phi_hp * (gating_inf(&vn, Gate::Hp, p) - hp) / tau_hp(vn);
    du[NA_I] = -bn / p.omega_n * (i_na + i_nap + 3.0 * i_pm);
    du[NA_I_A] = -ba / p.omega_a * (i_na_a + 3.0 * i_pm_a);
    du[K_I] = -bn / p.omega_n * (i_k - 2.0 * i_pm);
    du[K_I_A] = -ba / p.omega_a * (i_k_a - 2.0 * i_pm_a);
    du[NA_E] = bn / p.omega_e * (i_na + i_nap + 3.0 * i_pm) + ba / p.omega_e * (i_na_a + 3.0 * i_pm_a);
    du[K_E] = bn / p.omega_e * (i_k - 2.0 * i_pm) + ba / p.omega_e * (i_k_a - 2.0 * i_pm_a);
    Ok(du)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const P_L1: [f64; 3] = [-67.353771012452825, -63.416145863486385, 10.966529992012319];
    pub(crate) const P_L2: [f64; 3] = [-57.045796241401931, -55.561014704831557, 15.351285610517010];
    pub(crate) const P_R: [f64; 3] = [35.198894535488229, 11.631018842324311, 208.7014642903386];

    fn p() -> ParameterSet {
        ParameterSet::default()
    }

    #[test]
    fn gating_examples() {
        let p = p();
        assert_eq!(gating_inf(&-55.0, Gate::N, &p), 0.5);
        assert!(gating_inf(&500.0, Gate::M, &p) > 1.0 - 1e-9);
        assert!((gating_inf(&-29.0, Gate::M, &p) - 0.731058579).abs() < 1e-9);
        // θ_hp < 0 gives a decreasing sigmoid
        assert!(gating_inf(&-40.0, Gate::Hp, &p) < gating_inf(&-60.0, Gate::Hp, &p));
    }

    #[test]
    fn nernst_examples() {
        let p = p();
        assert_eq!(nernst(100.0, 100.0, &p).unwrap(), 0.0);
        let ek = nernst(3.5, 135.0, &p).unwrap();
        let direct = 1000.0 * (8.31 * 310.0 / 96485.0) * (3.5f64 / 135.0).ln();
        assert!((ek - direct).abs() < 1e-12);
        assert!((ek + 97.5).abs() < 0.1);
        assert_eq!(nernst(2.0, 7.0, &p).unwrap(), -nernst(7.0, 2.0, &p).unwrap());
        assert!(nernst(0.0, 1.0, &p).is_err());
    }

    #[test]
    fn ghk_examples() {
        let p = p();
        let i0 = ghk_current(&0.0, &135.0, &3.5, p.p_na, &p).unwrap();
        assert_eq!(i0, p.p_na * p.faraday * (3.5 - 135.0));
        // zero numerator: Xe e^{-φ} = Xi
        let v = 20.0;
        let xe = 3.5 * (v / p.rt_over_f_mv()).exp();
        assert!(ghk_current(&v, &xe, &3.5, p.p_k, &p).unwrap().abs() < 1e-14 * p.p_k * p.faraday * 3.5);
        for v in [1e-8, -1e-8] {
            let i = ghk_current(&v, &135.0, &3.5, p.p_na, &p).unwrap();
            assert!((i - i0).abs() < 1e-8 * i0.abs());
        }
        assert!(ghk_current(&0.0, &-1.0, &3.5, p.p_na, &p).is_err());
    }

    #[test]
    fn pump_examples() {
        let p = p();
        assert_eq!(pump_current(&0.0, &3.5, 5.0, 2.0, 7.7), 0.0);
        assert!((pump_current(&1e6, &1e6, 5.0, 2.0, 7.7) - 5.0).abs() < 1e-3);
        let v = pump_current(&3.5, &3.5, 5.0, 2.0, 7.7);
        assert!((v - 5.0 * (3.5f64 / 5.5).powi(2) * (3.5f64 / 11.2).powi(3)).abs() < 1e-15);
        assert!((v - 0.0618).abs() < 1e-4);
        let _ = p;
    }

    #[test]
    fn equilibria_residuals() {
        let p = p();
        for q in [P_L1, P_L2, P_R] {
            let r = reduced_rhs(q[0], q[1], q[2], &p).unwrap();
            for v in r {
                assert!(v.abs() < 1e-8, "{q:?}: {r:?}");
            }
        }
    }

    #[test]
    fn wave_rhs_examples() {
        let p = p();
        let s = WaveState::new(P_L1[0], P_L1[1], P_L1[2], 0.0);
        let d = wave_rhs(&s, 0.05, &p).unwrap();
        for v in d.to_array() {
            assert!(v.abs() < 1e-8);
        }
        let s = WaveState::new(P_R[0], P_R[1], P_R[2], 1.0);
        let d = wave_rhs(&s, 0.1, &p).unwrap();
        assert!((d.w - 0.1).abs() < 1e-8);
        assert_eq!(d.z, 1.0);
        assert!(wave_rhs(&s, 0.0, &p).is_err());
    }

    #[test]
    fn ki_domain_error() {
        let p = p();
        assert!(matches!(f_tilde(&0.0, &400.0, &p), Err(Error::Domain { .. })));
        assert!(matches!(h(&0.0, &0.0, &-1.0, &p), Err(Error::Domain { .. })));
    }

    #[test]
    fn g_y_at_zero_voltage() {
        let p = p();
        let z = 7.0;
        let (gy, _) = g_partials(0.0, z, &p).unwrap();
        // F²/RT in mV units carries the factor 1/1000
        let expected = -0.5 * p.faraday / p.rt_over_f_mv()
            * (p.p_na * (p.na_e + p.na_i_a) + p.p_k * (z + p.k_i_a));
        assert!((gy - expected).abs() < 1e-12 * expected.abs());
    }

    #[test]
    fn degree_zero_jets_are_bitwise_scalar() {
        let p = p();
        for &(x, y, z) in &[(-67.3, -63.4, 10.9), (35.2, 11.6, 208.7), (-20.0, 1e-5, 30.0), (0.0, 0.0, 50.0)] {
            let j = |v: f64| Jet::constant(v, 0);
            assert_eq!(f_tilde(&j(x), &j(z), &p).unwrap().value(), f_tilde(&x, &z, &p).unwrap());
            assert_eq!(g_tilde(&j(y), &j(z), &p).unwrap().value(), g_tilde(&y, &z, &p).unwrap());
            assert_eq!(h(&j(x), &j(y), &j(z), &p).unwrap().value(), h(&x, &y, &z, &p).unwrap());
        }
    }

    #[test]
    fn full_model_gating_and_tau() {
        let p = p();
        assert!((tau_n(-40.0) - 0.185).abs() < 1e-15);
        let mut u = [-70.0, -80.0, 0.0, 0.9, 10.0, 10.0, 130.0, 130.0, 135.0, 3.5];
        u[full::N] = gating_inf(&u[full::V_N], Gate::N, &p);
        let du = full_model_rhs(&u, &p).unwrap();
        assert_eq!(du[full::N], 0.0);
    }
}
