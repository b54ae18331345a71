use rand_distr::{Binomial, Distribution};
use serde_json::json;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::{RunConfig, SweepVariable, SHOT_STREAM};
use super::output::{Cell, Table};
use super::signals::{read_signal_matrix, signal_table};
use super::{Command, EXIT_NO_CONVERGENCE};
use crate::error::{GyroError, Result};
use crate::noise::{bath_coherence_simulation, coupling_scales, log_grid, BathModel, SequenceKind};
use crate::rng::{stream, stream_seed};
use crate::sensor::{
    detection_efficiency, optimal_repeats, polarization_time, polarization_time_hz_convention, sensitivity,
    sensitivity_vs_density, simulate_polarization_transfer, DensitySweep, Scheme, T2StarTable,
};
use crate::sequence::{run_aligned, AlignedSequence, NoiseModel};
use crate::threeaxis::{estimate_rotation, forward_model, FitStatus};

pub(super) fn dispatch(cmd: &Command, cfg: &RunConfig, out: Option<&Path>) -> Result<u8> {
    match cmd {
        Command::Ramsey => emit(cfg, out, &cmd_aligned(cfg, false)?),
        Command::Echo => emit(cfg, out, &cmd_aligned(cfg, true)?),
        Command::Families => emit(cfg, out, &cmd_families(cfg)?),
        Command::Estimate { .. } => cmd_estimate(cfg, out),
        Command::Sensitivity => emit(cfg, out, &cmd_sensitivity(cfg)?),
        Command::Bath => emit(cfg, out, &cmd_bath(cfg)?),
        Command::Polarize => emit(cfg, out, &cmd_polarize(cfg)?),
    }
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".config.json");
    out.with_file_name(name)
}

fn write_sidecar(cfg: &RunConfig, out: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(cfg).map_err(std::io::Error::other)?;
    std::fs::write(sidecar_path(out), text + "\n")?;
    Ok(())
}

fn emit(cfg: &RunConfig, out: Option<&Path>, table: &Table) -> Result<u8> {
    match out {
        Some(p) => {
            table.write(cfg.format, BufWriter::new(File::create(p)?))?;
            write_sidecar(cfg, p)?;
        }
        None => table.write(cfg.format, std::io::stdout().lock())?,
    }
    Ok(0)
}

fn active_noise(cfg: &RunConfig) -> Option<&NoiseModel> {
    (cfg.noise.ou.is_some() || cfg.noise.nv_t1.is_some()).then_some(&cfg.noise)
}

fn cmd_aligned(cfg: &RunConfig, echo: bool) -> Result<Table> {
    let sw = &cfg.sweep;
    let mut t = Table::new(&[
        "omega_rad_per_s",
        "tau_s",
        "detuning_hz",
        "signal",
        "signal_stderr",
        "n_trials",
    ]);
    for v in sw.values() {
        let (omega, timing) = match sw.variable {
            SweepVariable::Omega => (v, cfg.timing),
            SweepVariable::Tau => (sw.omega, crate::sequence::SequenceTiming { tau: v, ..cfg.timing }),
        };
        let seq = AlignedSequence {
            omega,
            detuning_hz: sw.detuning_hz,
            echo_phase: echo.then_some(sw.echo_phase),
        };
        let r = run_aligned(&seq, &timing, &cfg.constants, active_noise(cfg))?;
        t.push(vec![
            omega.into(),
            timing.tau.into(),
            sw.detuning_hz.into(),
            r.signal.into(),
            r.signal_stderr.into(),
            r.trials.into(),
        ]);
    }
    Ok(t)
}

fn cmd_families(cfg: &RunConfig) -> Result<Table> {
    let f = &cfg.families;
    let mut m = forward_model(&cfg.rotation, &f.taus, &f.families, &cfg.constants, active_noise(cfg))?;
    if let Some(n) = f.shot_counts {
        let master = stream_seed(cfg.seed, SHOT_STREAM);
        let nf = n as f64;
        for (i, row) in m.signal.iter_mut().enumerate() {
            for (j, s) in row.iter_mut().enumerate() {
                let mut rng = stream(master, (i * f.taus.len() + j) as u64);
                let p = s.clamp(0.0, 1.0);
                let k = Binomial::new(n, p)
                    .map_err(|e| GyroError::precondition(e.to_string()))?
                    .sample(&mut rng);
                *s = k as f64 / nf;
                m.stderr[i][j] = (s.mul_add(-*s, *s).max(1.0 / nf) / nf).sqrt();
            }
        }
    }
    Ok(signal_table(&m))
}

fn cmd_estimate(cfg: &RunConfig, out: Option<&Path>) -> Result<u8> {
    let path = cfg
        .estimate
        .signals
        .as_ref()
        .ok_or_else(|| GyroError::Config("estimate needs a signal file (--signals or estimate.signals)".into()))?;
    let file = File::open(path).map_err(|e| GyroError::Config(format!("{}: {e}", path.display())))?;
    let m = read_signal_matrix(file)?;
    let r = estimate_rotation(&m, &cfg.constants, &cfg.estimate.options)?;
    let finite = |v: f64| {
        if v.is_finite() {
            json!(v)
        } else {
            serde_json::Value::Null
        }
    };
    let report = json!({
        "omega_lab_rad_per_s": r.omega_lab,
        "omega_magnitude_rad_per_s": r.omega_lab.iter().map(|v| v * v).sum::<f64>().sqrt(),
        "sigma_rad_per_s": r.sigma(),
        "residual_norm": r.residual_norm,
        "iterations": r.iterations,
        "condition_number": finite(r.condition_number),
        "status": r.status,
        "aliasing_warning": r.aliasing_warning,
        "sign_ambiguous": r.sign_ambiguous,
    });
    let text = serde_json::to_string_pretty(&report).map_err(std::io::Error::other)? + "\n";
    match out {
        Some(p) => {
            std::fs::write(p, &text)?;
            write_sidecar(cfg, p)?;
        }
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    if r.aliasing_warning {
        eprintln!("warning: |omega|*tau_max is within 5% of pi; the fringe may alias");
    }
    Ok(if r.status == FitStatus::MaxIterations {
        EXIT_NO_CONVERGENCE
    } else {
        0
    })
}

fn cmd_sensitivity(cfg: &RunConfig) -> Result<Table> {
    let s = &cfg.sensitivity;
    let mut t = Table::new(&[
        "scheme",
        "t_interrogation_s",
        "n_nv_cm3",
        "t_effective_s",
        "n_spins",
        "detection_efficiency",
        "dead_time_s",
        "eta_rad_per_s_per_sqrt_hz",
        "eta_mdeg_per_s_per_sqrt_hz",
    ]);
    let b = &s.budget;
    let head = sensitivity(b)?;
    t.push(vec![
        "budget".into(),
        b.t2.into(),
        (4.0 * b.n_spins / (s.volume_mm3 * 1e-3)).into(),
        b.t2.into(),
        b.n_spins.into(),
        b.c.into(),
        b.t_d.into(),
        head.rad_per_s.into(),
        head.mdeg_per_s.into(),
    ]);

    let c = detection_efficiency(&cfg.readout)?;
    let t_d = cfg.timing.dead_time();
    let opt = optimal_repeats(&cfg.readout, s.t2_echo, cfg.timing.t_pol)?;
    eprintln!(
        "note: C = {:.4} at n_r = {}; eta-optimal n_r = {} (cap {}), {} without the cap",
        c, cfg.readout.n_r, opt.n_r, opt.max_repeats, opt.unconstrained
    );
    let table = T2StarTable::from_bath(&s.densities, &s.bath, s.p1_ratio)?;
    let sweep = DensitySweep {
        volume_mm3: s.volume_mm3,
        t_d,
        c,
        t2_echo: s.t2_echo,
        t2_star: &table,
    };
    for &ti in &s.interrogation_times {
        for (scheme, name) in [(Scheme::Ramsey, "ramsey"), (Scheme::Echo, "echo")] {
            let curve = sensitivity_vs_density(&s.densities, &sweep, scheme, ti)?;
            for k in 0..curve.densities.len() {
                let n = curve.densities[k];
                t.push(vec![
                    name.into(),
                    ti.into(),
                    n.into(),
                    curve.effective_time[k].into(),
                    (n * s.volume_mm3 * 1e-3 / 4.0).into(),
                    c.into(),
                    t_d.into(),
                    curve.eta_rad_per_s[k].into(),
                    curve.eta_mdeg_per_s[k].into(),
                ]);
            }
        }
    }
    Ok(t)
}

fn bath_grid(model: &BathModel, points: usize) -> Vec<f64> {
    if model.density_cm3 > 0.0 {
        let tc = model.characteristic_time();
        log_grid(1e-2 * tc, 1e2 * tc, points)
    } else {
        log_grid(1e-6, 1.0, points)
    }
}

fn cmd_bath(cfg: &RunConfig) -> Result<Table> {
    let mut t = Table::new(&[
        "n_bath_cm3",
        "tau_s",
        "ramsey_coherence",
        "ramsey_stderr",
        "echo_coherence",
        "echo_stderr",
    ]);
    for &d in &cfg.bath.densities {
        let model = BathModel {
            density_cm3: d,
            ..cfg.bath.model
        };
        let taus = bath_grid(&model, cfg.bath.points);
        let ramsey = bath_coherence_simulation(&model, SequenceKind::Ramsey, &taus)?;
        let echo = bath_coherence_simulation(&model, SequenceKind::Echo, &taus)?;
        let scales = coupling_scales(d);
        eprintln!(
            "note: n = {d:.3e} cm^-3: J_ee = {:.3e} Hz, J_eN = {:.3e} Hz, Ramsey 1/e time = {}, echo 1/e time = {}",
            scales.electron_electron_hz,
            scales.electron_nucleus_hz,
            fmt_time(ramsey.crossing_time((-1.0f64).exp())),
            fmt_time(echo.crossing_time((-1.0f64).exp())),
        );
        for k in 0..taus.len() {
            t.push(vec![
                d.into(),
                taus[k].into(),
                ramsey.coherence[k].into(),
                ramsey.stderr[k].into(),
                echo.coherence[k].into(),
                echo.stderr[k].into(),
            ]);
        }
    }
    Ok(t)
}

fn fmt_time(t: Option<f64>) -> String {
    t.map_or_else(|| "beyond grid".to_string(), |v| format!("{v:.3e} s"))
}

fn cmd_polarize(cfg: &RunConfig) -> Result<Table> {
    let p = &cfg.polarize;
    let t_pol = polarization_time(&cfg.constants, &p.drive);
    eprintln!(
        "note: t_pol = {:.4e} s with angular frequencies; the same expression in Hz gives {:.4e} s",
        t_pol,
        polarization_time_hz_convention(&cfg.constants, &p.drive)
    );
    let noise = if p.noise {
        Some(p.drive.electron_noise(cfg.polarize_seed())?)
    } else {
        None
    };
    let traj = simulate_polarization_transfer(
        &cfg.constants,
        &p.drive,
        p.duration.unwrap_or(t_pol),
        noise.as_ref(),
        &p.sim,
    )?;
    let mut t = Table::new(&["time_s", "polarization", "stderr"]);
    for k in 0..traj.times.len() {
        t.push(vec![
            Cell::from(traj.times[k]),
            traj.polarization[k].into(),
            traj.stderr[k].into(),
        ]);
    }
    Ok(t)
}
