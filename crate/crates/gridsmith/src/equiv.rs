//! T-section and star equivalent-circuit conversion for transformers.
//!
//! Source transformer records carry primary/secondary series impedances and
//! a magnetizing impedance, forming a T section. Branches use the Π
//! convention, so two-winding units are converted with the exact T-to-Π
//! transform and three-winding units are decomposed into three two-winding
//! legs around an auxiliary star node held at 1.0 pu.
//!
//! Branches carry only shunt susceptance, so any conductance in the
//! magnetizing admittance (iron loss) is dropped at branch construction;
//! the Π impedances themselves are exact.

use num_complex::Complex64;
use thiserror::Error;

use crate::netmodel::{Branch, BranchOrigin, Bus};

#[derive(Debug, Error)]
pub enum EquivError {
    #[error("T-to-Pi conversion needs nonzero z2 (got {0})")]
    ZeroZ2(Complex64),
    #[error("T-to-Pi conversion needs nonzero magnetizing impedance when present")]
    ZeroMagnetizing,
    #[error("side voltages must be positive (got {0} / {1})")]
    BadVoltage(f64, f64),
    #[error("auxiliary bus id {0} collides with a terminal bus")]
    AuxIdCollision(usize),
}

/// T-section equivalent: z1/z2 in series on each side of a central shunt z3.
/// `z3 = None` means no magnetizing branch (infinite impedance).
#[derive(Debug, Clone, Copy)]
pub struct TSection {
    pub z1: Complex64,
    pub z2: Complex64,
    pub z3: Option<Complex64>,
    /// Per-unit side voltage setpoints, used to derive the tap ratio.
    pub v1_pu: f64,
    pub v2_pu: f64,
}

/// Star equivalent of a three-winding transformer: per-winding series
/// impedances, optional magnetizing branch, per-side voltage setpoints.
#[derive(Debug, Clone, Copy)]
pub struct ThreeWinding {
    pub z: [Complex64; 3],
    pub z_mag: Option<Complex64>,
    pub v_pu: [f64; 3],
}

/// Π equivalent: series impedance with a shunt at each end.
/// `None` shunt legs are open circuits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiModel {
    pub z_series: Complex64,
    pub z_shunt_fr: Option<Complex64>,
    pub z_shunt_to: Option<Complex64>,
}

impl PiModel {
    pub fn y_series(&self) -> Complex64 {
        self.z_series.inv()
    }

    pub fn y_shunt_fr(&self) -> Complex64 {
        self.z_shunt_fr.map_or(Complex64::ZERO, |z| z.inv())
    }

    pub fn y_shunt_to(&self) -> Complex64 {
        self.z_shunt_to.map_or(Complex64::ZERO, |z| z.inv())
    }

    /// Two-port admittance matrix [[Y11, Y12], [Y21, Y22]].
    pub fn y_matrix(&self) -> [[Complex64; 2]; 2] {
        let ys = self.y_series();
        [
            [ys + self.y_shunt_fr(), -ys],
            [-ys, ys + self.y_shunt_to()],
        ]
    }
}

/// Two-port admittance matrix of a T section (center node eliminated).
pub fn t_y_matrix(t: &TSection) -> [[Complex64; 2]; 2] {
    let y1 = t.z1.inv();
    let y2 = t.z2.inv();
    let y3 = t.z3.map_or(Complex64::ZERO, |z| z.inv());
    // Kron elimination of the center node with incident y1, y2, y3
    let ysum = y1 + y2 + y3;
    [
        [y1 - y1 * y1 / ysum, -y1 * y2 / ysum],
        [-y1 * y2 / ysum, y2 - y2 * y2 / ysum],
    ]
}

/// Exact T-to-Π conversion:
/// Z_A = N/z2, Z_B = N/z3, Z_C = N/z1 with N = z1*z2 + z2*z3 + z1*z3,
/// where Z_A is the from-side shunt, Z_B the series element and Z_C the
/// to-side shunt. Without a magnetizing branch the result degenerates to
/// a plain series impedance z1 + z2.
pub fn t_to_pi(t: &TSection) -> Result<PiModel, EquivError> {
    let Some(z3) = t.z3 else {
        return Ok(PiModel {
            z_series: t.z1 + t.z2,
            z_shunt_fr: None,
            z_shunt_to: None,
        });
    };
    if z3.norm() == 0.0 {
        return Err(EquivError::ZeroMagnetizing);
    }
    if t.z2.norm() == 0.0 {
        return Err(EquivError::ZeroZ2(t.z2));
    }
    let n = t.z1 * t.z2 + t.z2 * z3 + t.z1 * z3;
    Ok(PiModel {
        z_series: n / z3,
        z_shunt_fr: Some(n / t.z2),
        z_shunt_to: if t.z1.norm() == 0.0 {
            None
        } else {
            Some(n / t.z1)
        },
    })
}

/// Inverse conversion, defined whenever both shunt legs are present.
pub fn pi_to_t(pi: &PiModel) -> Option<TSection> {
    let za = pi.z_shunt_fr?;
    let zc = pi.z_shunt_to?;
    let zb = pi.z_series;
    let total = za + zb + zc;
    Some(TSection {
        z1: za * zb / total,
        z2: zb * zc / total,
        z3: Some(za * zc / total),
        v1_pu: 1.0,
        v2_pu: 1.0,
    })
}

/// Build a branch for a two-winding transformer: Π elements from the exact
/// T-to-Π transform, tap ratio = primary pu voltage / secondary pu voltage
/// on the from side.
pub fn xfmr2w_to_branch(
    t: &TSection,
    id: usize,
    f_bus: usize,
    t_bus: usize,
) -> Result<Branch, EquivError> {
    if t.v1_pu <= 0.0 || t.v2_pu <= 0.0 {
        return Err(EquivError::BadVoltage(t.v1_pu, t.v2_pu));
    }
    let pi = t_to_pi(t)?;
    let mut br = Branch::new(id, f_bus, t_bus, pi.z_series.re, pi.z_series.im);
    br.b_fr = pi.y_shunt_fr().im;
    br.b_to = pi.y_shunt_to().im;
    br.tap = t.v1_pu / t.v2_pu;
    br.is_transformer = true;
    br.origin = BranchOrigin::Xfmr2w;
    Ok(br)
}

/// Decompose a three-winding transformer into three two-winding legs that
/// meet at `aux_bus` (held near 1.0 pu). Leg k runs terminal -> aux with
/// the winding impedance and tap v_k/1.0; the magnetizing admittance sits
/// on the primary leg at the star point.
pub fn xfmr3w_to_branches(
    x: &ThreeWinding,
    terminals: [usize; 3],
    aux_bus: Bus,
    branch_ids: [usize; 3],
) -> Result<([Branch; 3], Bus), EquivError> {
    if terminals.contains(&aux_bus.id) {
        return Err(EquivError::AuxIdCollision(aux_bus.id));
    }
    let mut legs = Vec::with_capacity(3);
    for k in 0..3 {
        if x.v_pu[k] <= 0.0 {
            return Err(EquivError::BadVoltage(x.v_pu[k], 1.0));
        }
        let mut br = Branch::new(branch_ids[k], terminals[k], aux_bus.id, x.z[k].re, x.z[k].im);
        br.tap = x.v_pu[k] / 1.0;
        br.is_transformer = true;
        br.origin = BranchOrigin::Xfmr3wLeg;
        legs.push(br);
    }
    if let Some(zm) = x.z_mag {
        if zm.norm() == 0.0 {
            return Err(EquivError::ZeroMagnetizing);
        }
        legs[0].b_to = zm.inv().im;
    }
    let [a, b, c] = <[Branch; 3]>::try_from(legs).expect("three legs");
    Ok(([a, b, c], aux_bus))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::BusType;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn max_y_diff(a: &[[Complex64; 2]; 2], b: &[[Complex64; 2]; 2]) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((a[i][j] - b[i][j]).norm());
            }
        }
        worst
    }

    #[test]
    fn spec_values_symmetric_t() {
        let t = TSection {
            z1: c(0.0, 0.1),
            z2: c(0.0, 0.1),
            z3: Some(c(0.0, 10.0)),
            v1_pu: 1.0,
            v2_pu: 1.0,
        };
        let pi = t_to_pi(&t).unwrap();
        assert!((pi.z_series - c(0.0, 0.201)).norm() < 1e-14);
        assert!((pi.z_shunt_fr.unwrap() - c(0.0, 20.1)).norm() < 1e-12);
        assert!((pi.z_shunt_to.unwrap() - c(0.0, 20.1)).norm() < 1e-12);
    }

    #[test]
    fn no_magnetizing_is_series_sum() {
        let t = TSection {
            z1: c(0.01, 0.1),
            z2: c(0.02, 0.2),
            z3: None,
            v1_pu: 1.0,
            v2_pu: 1.0,
        };
        let pi = t_to_pi(&t).unwrap();
        assert_eq!(pi.z_series, c(0.03, 0.30000000000000004));
        assert_eq!(pi.y_shunt_fr(), Complex64::ZERO);
        assert_eq!(pi.y_shunt_to(), Complex64::ZERO);
    }

    #[test]
    fn symmetric_t_gives_symmetric_pi() {
        let t = TSection {
            z1: c(0.003, 0.08),
            z2: c(0.003, 0.08),
            z3: Some(c(1.0, 45.0)),
            v1_pu: 1.0,
            v2_pu: 1.0,
        };
        let pi = t_to_pi(&t).unwrap();
        assert!((pi.z_shunt_fr.unwrap() - pi.z_shunt_to.unwrap()).norm() < 1e-14);
    }

    #[test]
    fn two_port_equivalence_random() {
        // deterministic pseudo-random T sections
        let mut state = 0x9e3779b97f4a7c15_u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let t = TSection {
                z1: c(next() * 0.05, 0.02 + next() * 0.3),
                z2: c(next() * 0.05, 0.02 + next() * 0.3),
                z3: Some(c(next() * 10.0, 5.0 + next() * 100.0)),
                v1_pu: 1.0,
                v2_pu: 1.0,
            };
            let pi = t_to_pi(&t).unwrap();
            let diff = max_y_diff(&pi.y_matrix(), &t_y_matrix(&t));
            assert!(diff < 1e-12, "admittance mismatch {diff}");
        }
    }

    #[test]
    fn pi_t_pi_round_trip() {
        let pi = PiModel {
            z_series: c(0.01, 0.12),
            z_shunt_fr: Some(c(0.5, 30.0)),
            z_shunt_to: Some(c(0.8, 55.0)),
        };
        let t = pi_to_t(&pi).unwrap();
        let back = t_to_pi(&t).unwrap();
        assert!((back.z_series - pi.z_series).norm() < 1e-10);
        assert!((back.z_shunt_fr.unwrap() - pi.z_shunt_fr.unwrap()).norm() < 1e-10);
        assert!((back.z_shunt_to.unwrap() - pi.z_shunt_to.unwrap()).norm() < 1e-10);
    }

    #[test]
    fn zero_z2_with_magnetizing_rejected() {
        let t = TSection {
            z1: c(0.0, 0.1),
            z2: Complex64::ZERO,
            z3: Some(c(0.0, 10.0)),
            v1_pu: 1.0,
            v2_pu: 1.0,
        };
        assert!(matches!(t_to_pi(&t), Err(EquivError::ZeroZ2(_))));
    }

    #[test]
    fn tap_from_side_voltages() {
        let t = TSection {
            z1: c(0.001, 0.05),
            z2: c(0.001, 0.05),
            z3: None,
            v1_pu: 1.05,
            v2_pu: 1.0,
        };
        let br = xfmr2w_to_branch(&t, 1, 10, 20).unwrap();
        assert!((br.tap - 1.05).abs() < 1e-15);
        assert!(br.is_transformer);

        let unit = TSection { v1_pu: 1.0, ..t };
        assert_eq!(xfmr2w_to_branch(&unit, 1, 10, 20).unwrap().tap, 1.0);
    }

    fn aux_bus(id: usize) -> Bus {
        Bus {
            id,
            area: 1000,
            base_kv: 330.0,
            bus_type: BusType::PQ,
            vm: 1.0,
            va: 0.0,
            vmin: 0.9,
            vmax: 1.1,
        }
    }

    #[test]
    fn three_winding_symmetric_legs() {
        let x = ThreeWinding {
            z: [c(0.002, 0.08); 3],
            z_mag: None,
            v_pu: [1.0; 3],
        };
        let (legs, aux) = xfmr3w_to_branches(&x, [1, 2, 3], aux_bus(99), [11, 12, 13]).unwrap();
        assert_eq!(aux.id, 99);
        for leg in &legs {
            assert_eq!(leg.t_bus, 99);
            assert_eq!(leg.tap, 1.0);
            assert!((leg.r - 0.002).abs() < 1e-15);
            assert!((leg.x - 0.08).abs() < 1e-15);
        }
        // driving-point impedance terminal i -> j (third open) is z_i + z_j
        let z12 = c(legs[0].r + legs[1].r, legs[0].x + legs[1].x);
        assert!((z12 - c(0.004, 0.16)).norm() < 1e-10);
    }

    #[test]
    fn magnetizing_only_on_primary_leg() {
        let x = ThreeWinding {
            z: [c(0.001, 0.05), c(0.001, 0.06), c(0.001, 0.07)],
            z_mag: Some(c(0.0, 50.0)),
            v_pu: [1.02, 1.0, 0.98],
        };
        let (legs, _) = xfmr3w_to_branches(&x, [1, 2, 3], aux_bus(99), [11, 12, 13]).unwrap();
        assert!(legs[0].b_to != 0.0);
        assert!((legs[0].b_to - (-1.0 / 50.0)).abs() < 1e-15);
        assert_eq!(legs[1].b_fr, 0.0);
        assert_eq!(legs[1].b_to, 0.0);
        assert_eq!(legs[2].b_to, 0.0);
        assert!((legs[0].tap - 1.02).abs() < 1e-15);
        assert!((legs[2].tap - 0.98).abs() < 1e-15);
    }

    #[test]
    fn aux_id_collision_rejected() {
        let x = ThreeWinding {
            z: [c(0.001, 0.05); 3],
            z_mag: None,
            v_pu: [1.0; 3],
        };
        assert!(matches!(
            xfmr3w_to_branches(&x, [1, 2, 3], aux_bus(2), [11, 12, 13]),
            Err(EquivError::AuxIdCollision(2))
        ));
    }
}
