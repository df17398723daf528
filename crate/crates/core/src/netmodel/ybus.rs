use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::case::{Branch, BranchKind, BusId, GeneratorModel, PowerSystemCase};
use crate::error::{Error, Result};

const J: Complex64 = Complex64::new(0.0, 1.0);

/// Complex nodal admittance matrix in coordinate form. Rows and columns follow
/// the case's bus order; entries iterate in row-major order, so every
/// operation on it is reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct YBus {
    bus_ids: Vec<BusId>,
    entries: BTreeMap<(usize, usize), Complex64>,
}

impl YBus {
    pub fn zeros(bus_ids: Vec<BusId>) -> Self {
        Self { bus_ids, entries: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn bus_ids(&self) -> &[BusId] {
        &self.bus_ids
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries.get(&(i, j)).copied().unwrap_or_default()
    }

    pub fn add(&mut self, i: usize, j: usize, v: Complex64) {
        *self.entries.entry((i, j)).or_default() += v;
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        self.entries.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (&(i, j), &v) in &self.entries {
            m[(i, j)] = v;
        }
        m
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); self.dim()];
        for (&(i, j), &y) in &self.entries {
            out[i] += y * v[j];
        }
        out
    }

    /// Eliminates node `k` (Kron reduction), returning the reduced matrix.
    pub fn kron_eliminate(&self, k: usize) -> Result<YBus> {
        let ykk = self.get(k, k);
        if ykk.norm() == 0.0 {
            return Err(Error::SingularNetwork(format!("zero pivot at node {k}")));
        }
        let n = self.dim();
        let remap = |i: usize| if i < k { i } else { i - 1 };
        let mut ids = self.bus_ids.clone();
        ids.remove(k);
        let mut out = YBus::zeros(ids);
        let col: Vec<(usize, Complex64)> = (0..n).filter(|&i| i != k).map(|i| (i, self.get(i, k))).collect();
        let row: Vec<(usize, Complex64)> = (0..n).filter(|&j| j != k).map(|j| (j, self.get(k, j))).collect();
        for (&(i, j), &v) in &self.entries {
            if i != k && j != k {
                out.add(remap(i), remap(j), v);
            }
        }
        for &(i, yik) in &col {
            if yik == Complex64::default() {
                continue;
            }
            for &(j, ykj) in &row {
                if ykj == Complex64::default() {
                    continue;
                }
                out.add(remap(i), remap(j), -yik * ykj / ykk);
            }
        }
        Ok(out)
    }
}

/// Equivalent pi of a line whose `z` and `y` are the totals of a uniformly
/// distributed line: returns the series impedance and half the shunt
/// admittance. Two sections of the same line composed in series reduce to
/// exactly the pi of the whole line.
pub fn long_line_pi(z: Complex64, y: Complex64) -> (Complex64, Complex64) {
    let gamma2 = z * y;
    let (sinhc, tanhc) = if gamma2.norm() < 1e-6 {
        // even power series of sinh(g)/g and tanh(g/2)/(g/2) in g^2
        (1.0 + gamma2 / 6.0 + gamma2 * gamma2 / 120.0, 1.0 - gamma2 / 12.0 + gamma2 * gamma2 / 120.0)
    } else {
        let g = gamma2.sqrt();
        (g.sinh() / g, (g / 2.0).tanh() / (g / 2.0))
    };
    (z * sinhc, y / 2.0 * tanhc)
}

/// Series admittance and per-end shunt admittance used to stamp a branch.
pub(crate) fn branch_pi(z: Complex64, b: f64, kind: BranchKind) -> (Complex64, Complex64) {
    match kind {
        BranchKind::Line => {
            let (zs, yh) = long_line_pi(z, J * b);
            (1.0 / zs, yh)
        }
        BranchKind::Transformer => (1.0 / z, J * b / 2.0),
    }
}

pub(crate) fn stamp_branch(y: &mut YBus, f: usize, t: usize, br: &Branch, z: Complex64) {
    let (ys, yh) = branch_pi(z, br.b, br.kind);
    let tap = br.tap;
    y.add(f, f, (ys + yh) / (tap * tap));
    y.add(t, t, ys + yh);
    y.add(f, t, -ys / tap);
    y.add(t, f, -ys / tap);
}

/// Shunt admittance that draws the load's complex power at voltage magnitude `v`.
pub fn load_admittance(p_pu: f64, q_pu: f64, v: f64) -> Complex64 {
    Complex64::new(p_pu, -q_pu) / (v * v)
}

/// Builds the positive-sequence Y-bus. With `loads_as_shunts` set, each load
/// becomes the constant admittance that consumes its power at the supplied
/// power-flow voltage magnitude (one entry per bus, case order).
pub fn build_ybus(case: &PowerSystemCase, loads_as_shunts: bool, pf_voltages: Option<&[f64]>) -> Result<YBus> {
    let pos = case.bus_positions();
    let mut y = YBus::zeros(case.buses.iter().map(|b| b.id).collect());
    for (i, bus) in case.buses.iter().enumerate() {
        if bus.shunt_g != 0.0 || bus.shunt_b != 0.0 {
            y.add(i, i, Complex64::new(bus.shunt_g, bus.shunt_b));
        }
    }
    for br in &case.branches {
        stamp_branch(&mut y, pos[&br.from], pos[&br.to], br, br.z1());
    }
    if loads_as_shunts {
        let v = pf_voltages.ok_or_else(|| {
            Error::InvalidArgument("loads_as_shunts requires power-flow voltages".into())
        })?;
        if v.len() != case.buses.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} bus voltages, got {}",
                case.buses.len(),
                v.len()
            )));
        }
        let base = case.system.mva_base;
        for load in &case.loads {
            let i = pos[&load.bus];
            y.add(i, i, load_admittance(load.p_mw / base, load.q_mvar / base, v[i]));
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sequence {
    Negative,
    Zero,
}

/// Negative- or zero-sequence nodal admittance matrix used to size fault
/// shunts.
///
/// Negative sequence: branches with `z2`, loads as their positive-sequence
/// shunts, machines as `ra + j x''` (synchronous) or `rs + j x'` (DFIG).
/// Zero sequence: lines with `z0`; transformers touching a generator bus are
/// delta/grounded-wye units that ground the network side through `z0`; other
/// transformers pass zero-sequence current through `z0`. Machines and loads
/// carry no zero-sequence current.
pub fn build_sequence_ybus(case: &PowerSystemCase, seq: Sequence, pf_voltages: &[f64]) -> Result<YBus> {
    let pos = case.bus_positions();
    let base = case.system.mva_base;
    let mut y = YBus::zeros(case.buses.iter().map(|b| b.id).collect());
    match seq {
        Sequence::Negative => {
            for br in &case.branches {
                stamp_branch(&mut y, pos[&br.from], pos[&br.to], br, br.z2());
            }
            for load in &case.loads {
                let i = pos[&load.bus];
                y.add(i, i, load_admittance(load.p_mw / base, load.q_mvar / base, pf_voltages[i]));
            }
            for g in &case.generators {
                let z_machine = match &g.model {
                    GeneratorModel::Synchronous { machine, .. } => Complex64::new(machine.ra, machine.xd_st),
                    GeneratorModel::Dfig { dfig } => Complex64::new(dfig.rs, dfig.x_t),
                };
                let i = pos[&g.bus];
                y.add(i, i, 1.0 / (z_machine * (base / g.mva_rating)));
            }
        }
        Sequence::Zero => {
            let gen_buses: std::collections::HashSet<BusId> = case.generators.iter().map(|g| g.bus).collect();
            for br in &case.branches {
                let (f, t) = (pos[&br.from], pos[&br.to]);
                match br.kind {
                    BranchKind::Line => stamp_branch(&mut y, f, t, br, br.z0()),
                    BranchKind::Transformer => {
                        let (fg, tg) = (gen_buses.contains(&br.from), gen_buses.contains(&br.to));
                        match (fg, tg) {
                            (true, false) => y.add(t, t, 1.0 / br.z0()),
                            (false, true) => y.add(f, f, 1.0 / br.z0()),
                            _ => stamp_branch(&mut y, f, t, br, br.z0()),
                        }
                    }
                }
            }
            // Buses isolated in zero sequence get a decoupled unit diagonal so
            // the matrix stays invertible without touching the rest.
            for i in 0..y.dim() {
                let connected = y.iter().any(|(r, c, v)| (r == i || c == i) && v.norm() > 0.0);
                if !connected {
                    y.add(i, i, Complex64::new(1.0, 0.0));
                }
            }
        }
    }
    Ok(y)
}

/// Driving-point impedance at node `k`: the `k`-th diagonal entry of `Y^-1`.
pub fn thevenin_impedance(y: &YBus, k: usize) -> Result<Complex64> {
    let lu = y.to_dense().lu();
    let mut e = nalgebra::DVector::zeros(y.dim());
    e[k] = Complex64::new(1.0, 0.0);
    let x = lu
        .solve(&e)
        .ok_or_else(|| Error::SingularNetwork("sequence network is singular".into()))?;
    Ok(x[k])
}
