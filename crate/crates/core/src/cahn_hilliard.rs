//! 2D Cahn-Hilliard spinodal decomposition of a binary A-B alloy.
//!
//! Explicit Euler in time, second-order central differences in space,
//! periodic boundaries. The update is written in flux form so that every
//! face flux enters two cells with opposite sign and total mass is conserved
//! up to rounding.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::engine::{format_scalar, Solver, StageContext, StageError};
use crate::model::InputValue;

#[derive(Debug, Error, PartialEq)]
pub enum ChError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("concentration {value} outside (0, 1)")]
    DomainError { value: f64 },
    #[error("field left (0, 1) at step {step} (cell {cell}, value {value}); time step too large?")]
    FieldOutOfRange { step: usize, cell: usize, value: f64 },
    #[error("cannot write output: {0}")]
    Io(String),
}

/// Physical and numerical parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CHParams {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub snapshot_interval: usize,
    pub c0: f64,
    pub noise_amplitude: f64,
    pub seed: u64,
    /// Energy scale R·T.
    pub rt: f64,
    /// Atomic interaction parameter.
    pub l: f64,
    /// Gradient energy coefficient.
    pub a_c: f64,
    pub d_a: f64,
    pub d_b: f64,
}

impl Default for CHParams {
    fn default() -> Self {
        CHParams {
            nx: 128,
            ny: 128,
            dx: 1.0,
            dt: 0.01,
            n_steps: 10_000,
            snapshot_interval: 500,
            c0: 0.5,
            noise_amplitude: 0.01,
            seed: 42,
            rt: 1.0,
            l: 3.0,
            a_c: 1.0,
            d_a: 1.0,
            d_b: 1.0,
        }
    }
}

/// Parameter names as they appear in inputs objects and component ports.
pub const PARAM_NAMES: [&str; 14] = [
    "nx",
    "ny",
    "dx",
    "dt",
    "n_steps",
    "snapshot_interval",
    "c0",
    "noise_amplitude",
    "seed",
    "RT",
    "L",
    "a_c",
    "D_A",
    "D_B",
];

fn as_count(name: &str, v: &InputValue) -> Result<u64, ChError> {
    let bad = || ChError::InvalidParams(format!("{name} must be a non-negative integer"));
    match v {
        InputValue::Number(n) => n
            .as_u64()
            .or_else(|| {
                n.as_f64()
                    .filter(|x| x.fract() == 0.0 && *x >= 0.0 && *x < 2f64.powi(64))
                    .map(|x| x as u64)
            })
            .ok_or_else(bad),
        _ => Err(bad()),
    }
}

impl CHParams {
    /// Build from named values; names not supplied keep their defaults.
    pub fn from_lookup<F>(mut lookup: F) -> Result<Self, ChError>
    where
        F: FnMut(&str) -> Result<Option<InputValue>, ChError>,
    {
        let mut p = CHParams::default();
        for name in PARAM_NAMES {
            let Some(v) = lookup(name)? else { continue };
            let real = || {
                v.as_f64()
                    .ok_or_else(|| ChError::InvalidParams(format!("{name} must be a number")))
            };
            match name {
                "nx" => p.nx = as_count(name, &v)? as usize,
                "ny" => p.ny = as_count(name, &v)? as usize,
                "n_steps" => p.n_steps = as_count(name, &v)? as usize,
                "snapshot_interval" => p.snapshot_interval = as_count(name, &v)? as usize,
                "seed" => p.seed = as_count(name, &v)?,
                "dx" => p.dx = real()?,
                "dt" => p.dt = real()?,
                "c0" => p.c0 = real()?,
                "noise_amplitude" => p.noise_amplitude = real()?,
                "RT" => p.rt = real()?,
                "L" => p.l = real()?,
                "a_c" => p.a_c = real()?,
                "D_A" => p.d_a = real()?,
                "D_B" => p.d_b = real()?,
                _ => unreachable!(),
            }
        }
        Ok(p)
    }

    pub fn from_inputs(inputs: &crate::model::InputsObject) -> Result<Self, ChError> {
        Self::from_lookup(|name| Ok(inputs.get(name).cloned()))
    }

    pub fn validate(&self) -> Result<(), ChError> {
        let fail = |m: &str| Err(ChError::InvalidParams(m.to_string()));
        if self.nx < 8 || self.ny < 8 {
            return fail("nx and ny must be at least 8");
        }
        let finite = [
            self.dx,
            self.dt,
            self.c0,
            self.noise_amplitude,
            self.rt,
            self.l,
            self.a_c,
            self.d_a,
            self.d_b,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return fail("parameters must be finite");
        }
        if self.dx <= 0.0 {
            return fail("dx must be > 0");
        }
        if self.dt <= 0.0 {
            return fail("dt must be > 0");
        }
        if self.snapshot_interval == 0 {
            return fail("snapshot_interval must be >= 1");
        }
        if self.noise_amplitude < 0.0 {
            return fail("noise_amplitude must be >= 0");
        }
        if !(self.c0 - self.noise_amplitude > 0.0 && self.c0 + self.noise_amplitude < 1.0) {
            return fail("c0 ± noise_amplitude must stay inside (0, 1)");
        }
        if self.rt <= 0.0 || self.a_c <= 0.0 || self.d_a <= 0.0 || self.d_b <= 0.0 {
            return fail("RT, a_c, D_A and D_B must be > 0");
        }
        Ok(())
    }

    /// Second derivative of the chemical free energy density.
    pub fn g_chem_second(&self, c: f64) -> f64 {
        self.rt / (c * (1.0 - c)) - 2.0 * self.l
    }

    /// Linearised explicit stability bound around `c0`.
    pub fn stable_dt_bound(&self) -> f64 {
        let k2_max = 8.0 / (self.dx * self.dx);
        let m = mobility(self.c0, self);
        2.0 / (m * k2_max * (self.g_chem_second(self.c0).abs() + self.a_c * k2_max))
    }

    pub fn stability_warning(&self) -> Option<String> {
        let bound = self.stable_dt_bound();
        (self.dt > 0.5 * bound).then(|| {
            format!(
                "dt = {} exceeds half the linear stability bound {:.6}; the explicit scheme may blow up",
                self.dt, bound
            )
        })
    }
}

/// Row-major `nx × ny` grid with periodic neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl Field {
    pub fn uniform(nx: usize, ny: usize, c: f64) -> Self {
        Field {
            nx,
            ny,
            values: vec![c; nx * ny],
        }
    }

    pub fn from_fn(nx: usize, ny: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                values.push(f(i, j));
            }
        }
        Field { nx, ny, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.values.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            nx: self.nx,
            ny: self.ny,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    fn check_concentration(&self) -> Result<(), ChError> {
        match self.values.iter().find(|&&c| !(c > 0.0 && c < 1.0)) {
            Some(&value) => Err(ChError::DomainError { value }),
            None => Ok(()),
        }
    }

    /// One CSV row per grid row, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 24);
        for row in self.values.chunks(self.nx) {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v:.16e}");
            }
            out.push('\n');
        }
        out
    }

    /// Binary 8-bit PGM, concentration 0..1 mapped linearly to 0..255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.nx, self.ny).into_bytes();
        out.extend(self.values.iter().map(|&c| (c.clamp(0.0, 1.0) * 255.0).round() as u8));
        out
    }
}

/// Counter-based SplitMix64: the `index`-th output of the stream seeded by `seed`.
/// Each cell draws from its own index, so the result is independent of
/// iteration order.
pub fn splitmix64(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform sample in [-1, 1) for one cell.
pub fn cell_noise(seed: u64, cell: usize) -> f64 {
    let unit = (splitmix64(seed, cell as u64) >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    2.0 * unit - 1.0
}

/// Initial field: `c0 + noise_amplitude · u`, `u` uniform in [-1, 1].
pub fn ch_init(p: &CHParams) -> Result<Field, ChError> {
    p.validate()?;
    let values = (0..p.nx * p.ny)
        .map(|cell| p.c0 + p.noise_amplitude * cell_noise(p.seed, cell))
        .collect();
    Ok(Field {
        nx: p.nx,
        ny: p.ny,
        values,
    })
}

/// Chemical free energy density.
pub fn g_chem(c: f64, p: &CHParams) -> Result<f64, ChError> {
    if !(c > 0.0 && c < 1.0) {
        return Err(ChError::DomainError { value: c });
    }
    Ok(p.rt * (c * c.ln() + (1.0 - c) * (1.0 - c).ln()) + p.l * c * (1.0 - c))
}

/// Diffusion mobility of B atoms; zero at both end points.
pub fn mobility(c: f64, p: &CHParams) -> f64 {
    (p.d_a / p.rt * c + p.d_b / p.rt * (1.0 - c)) * c * (1.0 - c)
}

struct Neighbours {
    east: Vec<usize>,
    west: Vec<usize>,
    north: Vec<usize>,
    south: Vec<usize>,
}

impl Neighbours {
    fn new(nx: usize, ny: usize) -> Self {
        let n = nx * ny;
        let mut nb = Neighbours {
            east: Vec::with_capacity(n),
            west: Vec::with_capacity(n),
            north: Vec::with_capacity(n),
            south: Vec::with_capacity(n),
        };
        for j in 0..ny {
            for i in 0..nx {
                nb.east.push(j * nx + (i + 1) % nx);
                nb.west.push(j * nx + (i + nx - 1) % nx);
                nb.north.push(((j + 1) % ny) * nx + i);
                nb.south.push(((j + ny - 1) % ny) * nx + i);
            }
        }
        nb
    }
}

fn laplacian_into(f: &Field, nb: &Neighbours, dx: f64, out: &mut [f64]) {
    let c = &f.values;
    let inv = 1.0 / (dx * dx);
    for k in 0..c.len() {
        out[k] = (c[nb.east[k]] + c[nb.west[k]] + c[nb.north[k]] + c[nb.south[k]] - 4.0 * c[k]) * inv;
    }
}

fn mu_into(f: &Field, p: &CHParams, nb: &Neighbours, out: &mut [f64]) {
    laplacian_into(f, nb, p.dx, out);
    for (m, &c) in out.iter_mut().zip(&f.values) {
        let lap = *m;
        *m = p.rt * (c.ln() - (1.0 - c).ln()) + p.l * (1.0 - 2.0 * c) - p.a_c * lap;
    }
}

/// Diffusion potential on the grid, with the 5-point periodic Laplacian.
pub fn mu_field(f: &Field, p: &CHParams) -> Result<Field, ChError> {
    f.check_concentration()?;
    let nb = Neighbours::new(f.nx, f.ny);
    let mut out = vec![0.0; f.values.len()];
    mu_into(f, p, &nb, &mut out);
    Ok(Field {
        nx: f.nx,
        ny: f.ny,
        values: out,
    })
}

/// Reusable buffers for repeated steps on one grid size.
pub struct Stepper {
    nb: Neighbours,
    mu: Vec<f64>,
    mob: Vec<f64>,
    flux_x: Vec<f64>,
    flux_y: Vec<f64>,
}

impl Stepper {
    pub fn new(nx: usize, ny: usize) -> Self {
        let n = nx * ny;
        Stepper {
            nb: Neighbours::new(nx, ny),
            mu: vec![0.0; n],
            mob: vec![0.0; n],
            flux_x: vec![0.0; n],
            flux_y: vec![0.0; n],
        }
    }

    /// Advance `f` in place by one explicit Euler step. On failure `f` is untouched.
    pub fn step(&mut self, f: &mut Field, p: &CHParams, step_index: usize) -> Result<(), ChError> {
        let n = f.values.len();
        mu_into(f, p, &self.nb, &mut self.mu);
        for (m, &c) in self.mob.iter_mut().zip(&f.values) {
            *m = mobility(c, p);
        }
        let inv_dx = 1.0 / p.dx;
        // flux_x[k]: across the east face of cell k; flux_y[k]: across its north face
        for k in 0..n {
            let e = self.nb.east[k];
            let nn = self.nb.north[k];
            self.flux_x[k] = 0.5 * (self.mob[k] + self.mob[e]) * (self.mu[e] - self.mu[k]) * inv_dx;
            self.flux_y[k] = 0.5 * (self.mob[k] + self.mob[nn]) * (self.mu[nn] - self.mu[k]) * inv_dx;
        }
        let scale = p.dt * inv_dx;
        // write new values into mu (no longer needed) to keep `f` intact on error
        for k in 0..n {
            let div = self.flux_x[k] - self.flux_x[self.nb.west[k]] + self.flux_y[k] - self.flux_y[self.nb.south[k]];
            let c = f.values[k] + scale * div;
            if !(c > 0.0 && c < 1.0) {
                return Err(ChError::FieldOutOfRange {
                    step: step_index,
                    cell: k,
                    value: c,
                });
            }
            self.mu[k] = c;
        }
        f.values.copy_from_slice(&self.mu);
        Ok(())
    }
}

/// One explicit Euler step of the Cahn-Hilliard equation.
pub fn ch_step(f: &Field, p: &CHParams) -> Result<Field, ChError> {
    f.check_concentration()?;
    let mut next = f.clone();
    Stepper::new(f.nx, f.ny).step(&mut next, p, 1)?;
    Ok(next)
}

/// Total free energy: chemical plus gradient energy, summed over cells times dx².
///
/// The gradient uses forward differences. Their squared sum is the discrete
/// functional whose variation is the 5-point Laplacian in the diffusion
/// potential, so the solver decreases exactly this quantity.
pub fn total_free_energy(f: &Field, p: &CHParams) -> Result<f64, ChError> {
    let (nx, ny) = (f.nx, f.ny);
    let inv_dx = 1.0 / p.dx;
    let mut total = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let c = f.at(i, j);
            let gx = (f.at((i + 1) % nx, j) - c) * inv_dx;
            let gy = (f.at(i, (j + 1) % ny) - c) * inv_dx;
            total += g_chem(c, p)? + 0.5 * p.a_c * (gx * gx + gy * gy);
        }
    }
    Ok(total * p.dx * p.dx)
}

/// One sample of the energy / mean-concentration series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesSample {
    pub step: usize,
    pub t: f64,
    pub energy: f64,
    pub mean_concentration: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeSeriesOut {
    pub samples: Vec<SeriesSample>,
}

impl TimeSeriesOut {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,energy,mean_concentration\n");
        for s in &self.samples {
            let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", s.t, s.energy, s.mean_concentration);
        }
        out
    }
}

/// Receives the field at every snapshot step.
pub trait SnapshotSink {
    fn snapshot(&mut self, step: usize, t: f64, field: &Field) -> Result<(), ChError>;
}

/// Discards snapshots.
pub struct NoSnapshots;

impl SnapshotSink for NoSnapshots {
    fn snapshot(&mut self, _: usize, _: f64, _: &Field) -> Result<(), ChError> {
        Ok(())
    }
}

/// Writes `step_XXXXXX.pgm` and `step_XXXXXX.csv` into a directory.
pub struct DirectorySink {
    dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl DirectorySink {
    pub fn new(dir: &Path) -> Result<Self, ChError> {
        std::fs::create_dir_all(dir).map_err(|e| ChError::Io(e.to_string()))?;
        Ok(DirectorySink {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }
}

pub fn snapshot_stem(step: usize) -> String {
    format!("step_{step:06}")
}

impl SnapshotSink for DirectorySink {
    fn snapshot(&mut self, step: usize, _t: f64, field: &Field) -> Result<(), ChError> {
        let stem = snapshot_stem(step);
        let pgm = self.dir.join(format!("{stem}.pgm"));
        let csv = self.dir.join(format!("{stem}.csv"));
        std::fs::write(&pgm, field.to_pgm()).map_err(|e| ChError::Io(e.to_string()))?;
        std::fs::write(&csv, field.to_csv()).map_err(|e| ChError::Io(e.to_string()))?;
        self.written.push(pgm);
        self.written.push(csv);
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub series: TimeSeriesOut,
    pub final_field: Field,
}

/// Initialise, then take `n_steps` steps, snapshotting at step 0, every
/// `snapshot_interval` steps and at the final step.
pub fn run_simulation(p: &CHParams, sink: &mut dyn SnapshotSink) -> Result<SimulationOutput, ChError> {
    let mut field = ch_init(p)?;
    let mut stepper = Stepper::new(p.nx, p.ny);
    let mut series = TimeSeriesOut::default();
    let mut sample = |step: usize, field: &Field, series: &mut TimeSeriesOut| -> Result<(), ChError> {
        let t = step as f64 * p.dt;
        sink.snapshot(step, t, field)?;
        series.samples.push(SeriesSample {
            step,
            t,
            energy: total_free_energy(field, p)?,
            mean_concentration: field.mean(),
        });
        Ok(())
    };
    sample(0, &field, &mut series)?;
    for step in 1..=p.n_steps {
        stepper.step(&mut field, p, step)?;
        if step % p.snapshot_interval == 0 || step == p.n_steps {
            sample(step, &field, &mut series)?;
        }
    }
    Ok(SimulationOutput {
        series,
        final_field: field,
    })
}

/// Convenience wrapper writing snapshots into `out_dir`.
pub fn run_simulation_to_dir(p: &CHParams, out_dir: &Path) -> Result<SimulationOutput, ChError> {
    let mut sink = DirectorySink::new(out_dir)?;
    let out = run_simulation(p, &mut sink)?;
    std::fs::write(out_dir.join("energy_series.csv"), out.series.to_csv()).map_err(|e| ChError::Io(e.to_string()))?;
    Ok(out)
}

struct StageSink<'c, 'a> {
    ctx: &'c mut StageContext<'a>,
    index: String,
}

impl SnapshotSink for StageSink<'_, '_> {
    fn snapshot(&mut self, step: usize, t: f64, field: &Field) -> Result<(), ChError> {
        let stem = snapshot_stem(step);
        let io = |e: StageError| ChError::Io(e.0);
        let pgm = self
            .ctx
            .write_aux(&format!("snapshots/{stem}.pgm"), &field.to_pgm())
            .map_err(io)?;
        let csv = self
            .ctx
            .write_aux(&format!("snapshots/{stem}.csv"), field.to_csv().as_bytes())
            .map_err(io)?;
        let _ = writeln!(self.index, "{step},{t:.16e},{pgm},{csv}");
        Ok(())
    }
}

/// Built-in level-2 realization (`builtin:cahn-hilliard`).
///
/// Produces whichever of `snapshots`, `energy_series`, `final_energy` and
/// `final_field` the component declares.
pub struct CahnHilliardSolver;

impl Solver for CahnHilliardSolver {
    fn run(&self, ctx: &mut StageContext<'_>) -> Result<(), StageError> {
        const KNOWN: [&str; 4] = ["snapshots", "energy_series", "final_energy", "final_field"];
        if let Some(p) = ctx.manifest.outputs.iter().find(|p| !KNOWN.contains(&p.name.as_str())) {
            return Err(StageError::new(format!(
                "cahn-hilliard cannot produce port {:?}",
                p.name
            )));
        }
        let params = CHParams::from_lookup(|name| ctx.value(name).map_err(|e| ChError::InvalidParams(e.0)))
            .map_err(|e| StageError::new(e.to_string()))?;
        if let Some(w) = params.stability_warning() {
            log::warn!("{w}");
            ctx.note(w);
        }
        let want_snapshots = ctx.wants_output("snapshots");
        let output = if want_snapshots {
            let mut sink = StageSink {
                ctx: &mut *ctx,
                index: String::from("step,t,image,field\n"),
            };
            let out = run_simulation(&params, &mut sink);
            let index = sink.index;
            let out = out.map_err(|e| StageError::new(e.to_string()))?;
            ctx.write_output("snapshots", "csv", index.as_bytes())?;
            out
        } else {
            run_simulation(&params, &mut NoSnapshots).map_err(|e| StageError::new(e.to_string()))?
        };
        if ctx.wants_output("energy_series") {
            ctx.write_output("energy_series", "csv", output.series.to_csv().as_bytes())?;
        }
        if ctx.wants_output("final_energy") {
            let g = output.series.samples.last().map(|s| s.energy).unwrap_or(f64::NAN);
            ctx.write_output("final_energy", "txt", format_scalar(g).as_bytes())?;
        }
        if ctx.wants_output("final_field") {
            ctx.write_output("final_field", "csv", output.final_field.to_csv().as_bytes())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_params() -> CHParams {
        CHParams {
            nx: 8,
            ny: 8,
            ..CHParams::default()
        }
    }

    #[test]
    fn g_chem_values() {
        let p = unit_params();
        // ln(0.5) + 0.75
        assert!((g_chem(0.5, &p).unwrap() - 0.056_853).abs() < 1e-6);
        assert!((g_chem(0.5, &p).unwrap() - (0.5f64.ln() + 0.75)).abs() < 1e-15);
        let expected = 0.25 * 0.25f64.ln() + 0.75 * 0.75f64.ln() + 3.0 * 0.1875;
        assert!((g_chem(0.25, &p).unwrap() - expected).abs() < 1e-15);
        assert!((g_chem(0.25, &p).unwrap() - 1.6486e-4).abs() < 1e-8);
        for c in [0.01, 0.2, 0.37, 0.49] {
            assert!((g_chem(c, &p).unwrap() - g_chem(1.0 - c, &p).unwrap()).abs() < 1e-14);
        }
        assert!(g_chem(0.0, &p).is_err());
        assert!(g_chem(1.0, &p).is_err());
        assert!(g_chem(f64::NAN, &p).is_err());
    }

    #[test]
    fn mobility_values() {
        let p = unit_params();
        assert_eq!(mobility(0.0, &p), 0.0);
        assert_eq!(mobility(1.0, &p), 0.0);
        assert!((mobility(0.5, &p) - 0.25).abs() < 1e-15);
        let q = CHParams {
            d_a: 2.0,
            d_b: 0.5,
            rt: 0.7,
            ..p
        };
        for k in 1..100 {
            assert!(mobility(k as f64 / 100.0, &q) > 0.0);
        }
    }

    #[test]
    fn mu_of_uniform_fields() {
        let p = unit_params();
        let mu = mu_field(&Field::uniform(8, 8, 0.5), &p).unwrap();
        assert!(mu.values.iter().all(|&m| m == 0.0));
        let mu = mu_field(&Field::uniform(8, 8, 0.25), &p).unwrap();
        let expected = (1.0f64 / 3.0).ln() + 1.5;
        assert!((expected - 0.401_388).abs() < 1e-6);
        assert!(mu.values.iter().all(|&m| (m - expected).abs() < 1e-14));
        for c in [0.1, 0.3, 0.45] {
            let a = mu_field(&Field::uniform(8, 8, c), &p).unwrap();
            let b = mu_field(&Field::uniform(8, 8, 1.0 - c), &p).unwrap();
            assert!((a.values[0] + b.values[0]).abs() < 1e-14);
        }
        assert!(mu_field(&Field::uniform(8, 8, 1.0), &p).is_err());
    }

    #[test]
    fn laplacian_of_a_bump() {
        let mut f = Field::uniform(8, 8, 0.5);
        f.values[3 * 8 + 3] = 0.6;
        let p = CHParams {
            dx: 0.5,
            ..unit_params()
        };
        let mu = mu_field(&f, &p).unwrap();
        let mu_bump = p.rt * (0.6f64.ln() - 0.4f64.ln()) + p.l * (1.0 - 1.2) - p.a_c * (-4.0 * 0.1) / 0.25;
        assert!((mu.at(3, 3) - mu_bump).abs() < 1e-12);
        let mu_nb = -p.a_c * 0.1 / 0.25;
        assert!((mu.at(4, 3) - mu_nb).abs() < 1e-12);
        assert!((mu.at(3, 2) - mu_nb).abs() < 1e-12);
    }

    #[test]
    fn init_examples() {
        let p = CHParams {
            noise_amplitude: 0.0,
            ..unit_params()
        };
        assert!(ch_init(&p).unwrap().values.iter().all(|&c| c == 0.5));
        let p = unit_params();
        let a = ch_init(&p).unwrap();
        assert_eq!(a, ch_init(&p).unwrap());
        assert!(a.values.iter().all(|&c| (0.49..=0.51).contains(&c)));
        assert_ne!(a, ch_init(&CHParams { seed: 7, ..p.clone() }).unwrap());
        let bad = CHParams { c0: 0.005, ..p };
        assert!(matches!(ch_init(&bad), Err(ChError::InvalidParams(_))));
    }

    #[test]
    fn noise_is_uniform_enough() {
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|k| cell_noise(9, k)).collect();
        assert!(xs.iter().all(|x| (-1.0..1.0).contains(x)));
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn step_uniform_fixed_point_and_mass() {
        let p = unit_params();
        let f = Field::uniform(8, 8, 0.3);
        assert_eq!(ch_step(&f, &p).unwrap(), f);
        let f = ch_init(&CHParams {
            noise_amplitude: 0.2,
            ..p.clone()
        })
        .unwrap();
        let g = ch_step(&f, &p).unwrap();
        assert!((g.sum() - f.sum()).abs() < 1e-12);
        assert_ne!(g, f);
    }

    #[test]
    fn unstable_step_is_reported() {
        let p = CHParams {
            dt: 50.0,
            noise_amplitude: 0.2,
            ..unit_params()
        };
        let f = ch_init(&p).unwrap();
        assert!(matches!(ch_step(&f, &p), Err(ChError::FieldOutOfRange { step: 1, .. })));
        assert!(p.stability_warning().is_some());
        assert!(CHParams::default().stability_warning().is_none());
        assert!((CHParams::default().stable_dt_bound() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn energy_of_uniform_field() {
        let p = unit_params();
        let g = total_free_energy(&Field::uniform(8, 8, 0.5), &p).unwrap();
        assert!((g - 3.638_59).abs() < 1e-5);
        let q = CHParams { dx: 0.5, ..p.clone() };
        let g = total_free_energy(&Field::uniform(8, 12, 0.2), &q).unwrap();
        assert!((g - 96.0 * 0.25 * g_chem(0.2, &q).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn perturbing_an_energy_minimum_raises_energy() {
        // L = 1 < 2 RT: g_chem is convex, c = 0.5 is its minimum
        let p = CHParams {
            l: 1.0,
            ..unit_params()
        };
        let base = Field::uniform(8, 8, 0.5);
        let g0 = total_free_energy(&base, &p).unwrap();
        for seed in 0..5 {
            let noisy = ch_init(&CHParams {
                seed,
                l: 1.0,
                noise_amplitude: 0.05,
                ..unit_params()
            })
            .unwrap();
            let centred = noisy.map(|c| c - noisy.mean() + 0.5);
            assert!(total_free_energy(&centred, &p).unwrap() > g0);
        }
    }

    #[test]
    fn simulation_cadence() {
        let p = CHParams {
            n_steps: 0,
            ..unit_params()
        };
        let out = run_simulation(&p, &mut NoSnapshots).unwrap();
        assert_eq!(out.series.samples.len(), 1);

        let p = CHParams {
            n_steps: 25,
            snapshot_interval: 10,
            ..unit_params()
        };
        let out = run_simulation(&p, &mut NoSnapshots).unwrap();
        let steps: Vec<usize> = out.series.samples.iter().map(|s| s.step).collect();
        assert_eq!(steps, vec![0, 10, 20, 25]);

        let p = CHParams {
            noise_amplitude: 0.0,
            n_steps: 50,
            ..unit_params()
        };
        let out = run_simulation(&p, &mut NoSnapshots).unwrap();
        assert_eq!(out.final_field, ch_init(&p).unwrap());
    }

    #[test]
    fn pgm_and_csv_formats() {
        let f = Field::from_fn(8, 8, |i, j| if i == 0 && j == 0 { 1.0 } else { 0.0 });
        let pgm = f.to_pgm();
        assert!(pgm.starts_with(b"P5\n8 8\n255\n"));
        assert_eq!(pgm.len(), 11 + 64);
        assert_eq!(pgm[11], 255);
        assert_eq!(pgm[12], 0);
        let f = Field::uniform(8, 8, 0.1);
        let csv = f.to_csv();
        assert_eq!(csv.lines().count(), 8);
        let first: f64 = csv.lines().next().unwrap().split(',').next().unwrap().parse().unwrap();
        assert_eq!(first, 0.1);
    }

    #[test]
    fn params_from_inputs() {
        let inputs =
            crate::config::parse_inputs(br#"{"nx": 16, "dt": 0.005, "L": 2.5, "seed": 18446744073709551615}"#).unwrap();
        let p = CHParams::from_inputs(&inputs).unwrap();
        assert_eq!(p.nx, 16);
        assert_eq!(p.ny, 128);
        assert_eq!(p.dt, 0.005);
        assert_eq!(p.l, 2.5);
        assert_eq!(p.seed, u64::MAX);
        let inputs = crate::config::parse_inputs(br#"{"nx": 16.5}"#).unwrap();
        assert!(CHParams::from_inputs(&inputs).is_err());
        let inputs = crate::config::parse_inputs(br#"{"dt": "fast"}"#).unwrap();
        assert!(CHParams::from_inputs(&inputs).is_err());
    }
}
