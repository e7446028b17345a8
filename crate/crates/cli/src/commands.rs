//! Subcommand adapters: build the environment, call the host toolkit,
//! format the result.

use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Duration;

use ringlab_core::hostkit::{
    export_session, hr_benchmark, pooled_mae, run_hr_trial, FetchedFile, Host, HostError, HrCondition,
    PartialDownload, Session, NOISY_SNR_DB,
};
use ringlab_core::ringsim::Scenario;
use ringlab_core::transport::{Environment, RingSpec};
use ringlab_core::types::LogFileEntry;
use ringlab_core::{Mac, Modality, SensorConfig, MICROS_PER_SEC};
use ringlab_gateway::{GatewayConfig, Pacing};

use crate::table::{pairs, Table};
use crate::{Cli, CliConfig, CliError, Cmd, ExportArg};

type Result<T> = std::result::Result<T, CliError>;

const PACE_TICK: Duration = Duration::from_millis(10);

pub fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = &cli.config;
    match &cli.cmd {
        Cmd::Sim { scenarios, write_env, duration, speed, report_every } => {
            sim(cfg, out, scenarios, write_env.as_deref(), *duration, *speed, *report_every)
        }
        Cmd::Scan { scan_ms } => scan(cfg, out, *scan_ms),
        Cmd::Info { mac } => info(cfg, out, mac),
        Cmd::Calibrate { mac } => calibrate(cfg, out, mac),
        Cmd::Stream { mac, duration, config, export, annotations, calibrate } => {
            stream(cfg, out, mac, *duration, config.as_deref(), *export, annotations, *calibrate)
        }
        Cmd::Annotate { mac, duration, speed, config, export } => {
            annotate(cfg, out, mac, *duration, *speed, config.as_deref(), *export)
        }
        Cmd::Offline { mac, total, segment, delay, fetch, export } => {
            offline(cfg, out, mac, *total, *segment, *delay, *fetch, *export)
        }
        Cmd::Files { mac } => files(cfg, out, mac),
        Cmd::Fetch { mac, id, resume } => fetch(cfg, out, mac, *id, *resume),
        Cmd::HrEval { scenario, noise, count, duration } => {
            hr_eval(cfg, out, scenario.as_deref(), noise.map(Into::into), *count, *duration)
        }
        Cmd::Gateway { port, bind, speed, assets } => gateway(cfg, out, (*bind, *port).into(), *speed, assets.clone()),
    }
}

fn environment(cfg: &CliConfig) -> Result<Environment> {
    let mut env = match &cfg.env {
        Some(p) => Environment::load(p)?,
        None => Environment::with_rings(cfg.rings, 0),
    };
    if let Some(s) = cfg.seed {
        env.seed = s;
    }
    Ok(env)
}

/// Address of the `k`-th ring of `env`, as `Environment::build` assigns it.
fn spec_mac(k: usize, spec: &RingSpec) -> Mac {
    spec.mac.unwrap_or_else(|| Mac::for_index(k as u32 + 1))
}

/// A MAC address, or a 1-based ring index.
fn resolve(host: &Host, arg: &str) -> Result<Mac> {
    let macs = host.radio().macs();
    if let Ok(i) = arg.parse::<usize>() {
        return i
            .checked_sub(1)
            .and_then(|i| macs.get(i).copied())
            .ok_or_else(|| CliError::Usage(format!("no ring #{arg}; {} in range", macs.len())));
    }
    arg.parse().map_err(CliError::Usage)
}

fn connected(cfg: &CliConfig, arg: &str) -> Result<(Environment, Host, Mac)> {
    let env = environment(cfg)?;
    let mut host = Host::new(env.build()?);
    let mac = resolve(&host, arg)?;
    host.connect(mac)?;
    Ok((env, host, mac))
}

fn out_dir(cfg: &CliConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn load_config(path: Option<&Path>) -> Result<SensorConfig> {
    let Some(p) = path else { return Ok(SensorConfig::reference()) };
    let text = fs::read_to_string(p).map_err(CliError::io(p.display().to_string()))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
}

fn secs_to_us(s: f64) -> Result<u64> {
    if s.is_finite() && s >= 0.0 {
        Ok((s * MICROS_PER_SEC as f64).round() as u64)
    } else {
        Err(CliError::Usage(format!("invalid duration {s}")))
    }
}

fn sim(
    cfg: &CliConfig,
    out: &mut dyn Write,
    scenarios: &[PathBuf],
    write_env: Option<&Path>,
    duration: Option<f64>,
    speed: f64,
    report_every: f64,
) -> Result<()> {
    let mut env = environment(cfg)?;
    if !scenarios.is_empty() && cfg.env.is_none() {
        env.rings.clear();
    }
    for p in scenarios {
        let abs = fs::canonicalize(p).map_err(CliError::io(p.display().to_string()))?;
        env.rings.push(RingSpec { scenario: Some(abs), ..RingSpec::default() });
    }
    let mut host = Host::new(env.build()?);
    let ads = host.discover(MICROS_PER_SEC);

    let mut t = Table::new(&["MAC", "NAME", "RSSI", "OFFSET_S", "DRIFT_PPM", "BATTERY", "SCENARIO"]);
    for (k, spec) in env.rings.iter().enumerate() {
        let mac = spec_mac(k, spec);
        let ring = host.radio().ring(mac).expect("built ring");
        t.row(vec![
            mac.to_string(),
            ring.name().to_string(),
            ads.iter().find(|a| a.mac == mac).map_or("-".into(), |a| a.rssi.to_string()),
            format!("{}", spec.offset_s),
            format!("{}", spec.drift_ppm),
            format!("{}", ring.status().battery_pct),
            spec.scenario.as_ref().map_or("resting".into(), |p| p.display().to_string()),
        ]);
    }
    t.write(out, cfg.format)?;

    if let Some(path) = write_env {
        let text = toml::to_string(&env).map_err(|e| CliError::Usage(format!("environment: {e}")))?;
        fs::write(path, text).map_err(CliError::io(path.display().to_string()))?;
        writeln!(out, "wrote {}", path.display())?;
    }
    out.flush()?;

    let limit = duration.map(secs_to_us).transpose()?;
    let every = secs_to_us(report_every)?.max(1);
    let rt = runtime()?;
    rt.block_on(async {
        let mut pacing = Pacing::new(0, speed);
        let mut next_report = every;
        let stop = tokio::signal::ctrl_c();
        tokio::pin!(stop);
        loop {
            let now = host.radio().now_us();
            if limit.is_some_and(|l| now >= l) {
                break;
            }
            let target = pacing.target(now).min(limit.unwrap_or(u64::MAX));
            host.radio_mut().advance_to(target);
            while host.radio().now_us() >= next_report {
                for mac in host.radio().macs() {
                    let r = host.radio().ring(mac).expect("ring");
                    let st = r.status();
                    writeln!(out, "t={}s {mac} mode={:?} battery={}%", next_report / MICROS_PER_SEC, st.mode, st.battery_pct)?;
                }
                out.flush()?;
                next_report += every;
            }
            tokio::select! {
                _ = &mut stop => break,
                _ = tokio::time::sleep(PACE_TICK) => {}
            }
        }
        Ok::<_, CliError>(())
    })
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(CliError::io("runtime"))
}

fn scan(cfg: &CliConfig, out: &mut dyn Write, scan_ms: u64) -> Result<()> {
    let mut host = Host::new(environment(cfg)?.build()?);
    let mut ads = host.discover(scan_ms * 1000);
    ads.sort_by(|a, b| b.rssi.cmp(&a.rssi).then(a.mac.cmp(&b.mac)));
    let mut t = Table::new(&["MAC", "NAME", "RSSI", "BATTERY", "FW"]);
    for a in ads {
        t.row(vec![a.mac.to_string(), a.name, a.rssi.to_string(), a.battery_pct.to_string(), a.fw_version]);
    }
    t.write(out, cfg.format)?;
    Ok(())
}

fn info(cfg: &CliConfig, out: &mut dyn Write, mac: &str) -> Result<()> {
    let (_, mut host, mac) = connected(cfg, mac)?;
    let d = host.device_info(mac)?;
    let mut items = vec![
        ("mac", d.mac.to_string()),
        ("mode", format!("{:?}", d.mode)),
        ("health", format!("{:?}", d.health)),
        ("battery_pct", d.battery_pct.to_string()),
        ("fw_version", d.fw_version.clone()),
        ("flash_free", d.flash_free.to_string()),
        ("flash_capacity", d.flash_capacity.to_string()),
        ("file_count", d.file_count.to_string()),
        ("led_codes", format!("{:?}", d.led_codes)),
    ];
    let names = ["ppg", "imu", "temp"];
    for (s, name) in d.sensors.iter().zip(names) {
        let state = if s.fault { "fault" } else if s.enabled { "on" } else { "off" };
        items.push((name, format!("{} Hz {state}", s.rate_hz)));
    }
    pairs(out, cfg.format, &items)?;
    Ok(())
}

fn calibrate(cfg: &CliConfig, out: &mut dyn Write, mac: &str) -> Result<()> {
    let (_, mut host, mac) = connected(cfg, mac)?;
    let (report, result) = match host.calibrate(mac) {
        Ok(r) => (r, Ok(())),
        Err(HostError::NotConverged(r)) => ((*r).clone(), Err(HostError::NotConverged(r))),
        Err(e) => return Err(e.into()),
    };
    let mut t = Table::new(&["ITER", "RTT_US", "OFFSET_US", "TRIMMED"]);
    for (i, it) in report.iterations.iter().enumerate() {
        t.row(vec![
            (i + 1).to_string(),
            it.rtt_us.to_string(),
            it.offset_estimate_us.to_string(),
            it.trimmed.to_string(),
        ]);
    }
    t.write(out, cfg.format)?;
    pairs(
        out,
        cfg.format,
        &[
            ("final_offset_us", report.final_offset_us.to_string()),
            ("iterations", report.iterations.len().to_string()),
            ("converged", report.converged.to_string()),
        ],
    )?;
    Ok(result?)
}

fn parse_annotation(s: &str) -> Result<(u64, String)> {
    let (t, tag) = s.split_once(':').ok_or_else(|| CliError::Usage(format!("annotation `{s}`: want SECONDS:TAG")))?;
    let t: f64 = t.trim().parse().map_err(|_| CliError::Usage(format!("annotation `{s}`: bad time")))?;
    Ok((secs_to_us(t)?, tag.to_string()))
}

fn summarize(cfg: &CliConfig, out: &mut dyn Write, s: &Session) -> Result<()> {
    let hr: Vec<f64> = s.metrics.iter().filter_map(|m| m.hr_bpm).collect();
    let mean_hr = if hr.is_empty() { "-".to_string() } else { format!("{:.1}", hr.iter().sum::<f64>() / hr.len() as f64) };
    pairs(
        out,
        cfg.format,
        &[
            ("session_id", s.id.clone()),
            ("mac", s.mac.to_string()),
            ("start_us", s.start_us.to_string()),
            ("end_us", s.end_us.map_or("-".into(), |t| t.to_string())),
            ("packets_received", s.packets_received.to_string()),
            ("missing_packets", s.missing_packets().to_string()),
            ("gaps", s.gaps.len().to_string()),
            ("ppg_records", s.count(Modality::Ppg).to_string()),
            ("imu_records", s.count(Modality::Imu).to_string()),
            ("temp_records", s.count(Modality::Temp).to_string()),
            ("annotations", s.annotations.len().to_string()),
            ("mean_hr_bpm", mean_hr),
        ],
    )?;
    Ok(())
}

fn export(cfg: &CliConfig, out: &mut dyn Write, s: &Session, format: ExportArg) -> Result<()> {
    if let Some(base) = &cfg.out {
        let dir = base.join(&s.id);
        export_session(s, &dir, format.into())?;
        writeln!(out, "exported {}", dir.display())?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn stream(
    cfg: &CliConfig,
    out: &mut dyn Write,
    mac: &str,
    duration: f64,
    config: Option<&Path>,
    format: ExportArg,
    annotations: &[String],
    calibrate: bool,
) -> Result<()> {
    let config = load_config(config)?;
    let mut marks = annotations.iter().map(|a| parse_annotation(a)).collect::<Result<Vec<_>>>()?;
    marks.sort_by_key(|m| m.0);
    let total_us = secs_to_us(duration)?;
    let duration_ms = u32::try_from(total_us / 1000).ok().filter(|&ms| ms > 0);
    let duration_ms = duration_ms.ok_or_else(|| CliError::Usage("duration must be positive".into()))?;
    if marks.last().is_some_and(|m| m.0 > total_us) {
        return Err(CliError::Usage("annotation after the end of the session".into()));
    }

    let (_, mut host, mac) = connected(cfg, mac)?;
    if calibrate {
        host.calibrate(mac)?;
    }
    let mut s = host.start_session(mac, config, duration_ms)?;
    let t0 = host.radio().now_us();
    for (at, tag) in &marks {
        let dt = (t0 + at).saturating_sub(host.radio().now_us());
        host.run_session(&mut s, dt)?;
        host.annotate(&mut s, tag)?;
    }
    let left = (t0 + total_us).saturating_sub(host.radio().now_us());
    host.run_until_ended(&mut s, left + 5 * MICROS_PER_SEC)?;
    summarize(cfg, out, &s)?;
    export(cfg, out, &s, format)
}

enum Line {
    Now(String),
    At(u64, String),
}

fn parse_line(line: &str) -> Result<Option<Line>> {
    let line = line.trim();
    if line.is_empty() {
        return Ok(None);
    }
    if let Some(rest) = line.strip_prefix('@') {
        let (t, tag) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
        let t: f64 = t.parse().map_err(|_| CliError::Usage(format!("bad time in `{line}`")))?;
        let tag = tag.trim();
        if tag.is_empty() {
            return Err(CliError::Usage(format!("missing tag in `{line}`")));
        }
        return Ok(Some(Line::At(secs_to_us(t)?, tag.to_string())));
    }
    Ok(Some(Line::Now(line.to_string())))
}

fn annotate(
    cfg: &CliConfig,
    out: &mut dyn Write,
    mac: &str,
    duration: Option<f64>,
    speed: f64,
    config: Option<&Path>,
    format: ExportArg,
) -> Result<()> {
    let config = load_config(config)?;
    let duration_ms = match duration {
        Some(d) => u32::try_from(secs_to_us(d)? / 1000).map_err(|_| CliError::Usage("duration too long".into()))?,
        None => 0,
    };
    let (_, mut host, mac) = connected(cfg, mac)?;
    let mut s = host.start_session(mac, config, duration_ms)?;
    let t0 = host.radio().now_us();
    writeln!(out, "streaming {} from {mac}; one tag per line", s.id)?;
    out.flush()?;

    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for line in std::io::stdin().lock().lines() {
            let Ok(line) = line else { break };
            if tx.send(line).is_err() {
                break;
            }
        }
    });

    let mut pacing = Pacing::new(t0, speed);
    let mut scheduled: Vec<(u64, String)> = Vec::new();
    let mut stdin_open = true;
    // A timed session runs to its end plus a grace period for the last packets.
    let deadline = duration.map(|_| t0 + u64::from(duration_ms) * 1000 + 2 * MICROS_PER_SEC);
    while !s.ended && deadline.map_or(stdin_open || !scheduled.is_empty(), |d| host.radio().now_us() < d) {
        loop {
            match rx.try_recv() {
                Ok(line) => match parse_line(&line)? {
                    Some(Line::Now(tag)) => {
                        let a = host.annotate(&mut s, &tag)?;
                        writeln!(out, "ack {} {}", a.timestamp_us, a.tag)?;
                    }
                    Some(Line::At(t, tag)) => {
                        scheduled.push((t0 + t, tag));
                        scheduled.sort_by_key(|m| std::cmp::Reverse(m.0));
                    }
                    None => {}
                },
                Err(mpsc::TryRecvError::Empty) => break,
                Err(mpsc::TryRecvError::Disconnected) => {
                    stdin_open = false;
                    break;
                }
            }
        }
        let target = pacing.target(host.radio().now_us()).min(deadline.unwrap_or(u64::MAX));
        while let Some((at, _)) = scheduled.last() {
            if *at > target || s.ended {
                break;
            }
            let (at, tag) = scheduled.pop().expect("non-empty");
            host.run_session(&mut s, at.saturating_sub(host.radio().now_us()))?;
            let a = host.annotate(&mut s, &tag)?;
            writeln!(out, "ack {} {}", a.timestamp_us, a.tag)?;
        }
        host.run_session(&mut s, target.saturating_sub(host.radio().now_us()))?;
        out.flush()?;
        std::thread::sleep(PACE_TICK);
    }
    for (_, tag) in scheduled.iter().rev() {
        log::warn!("session over before `{tag}`");
    }
    if duration.is_some() || s.ended {
        host.run_until_ended(&mut s, 0)?;
    } else {
        host.stop_session(&mut s)?;
    }
    summarize(cfg, out, &s)?;
    export(cfg, out, &s, format)
}

fn file_table(cfg: &CliConfig, out: &mut dyn Write, files: &[LogFileEntry]) -> Result<()> {
    let mut t = Table::new(&["ID", "START_TIME", "SIZE", "CRC", "RECORDS"]);
    for f in files {
        t.row(vec![
            f.file_id.to_string(),
            f.start_time.to_string(),
            f.size.to_string(),
            format!("{:08x}", f.crc),
            f.record_count().to_string(),
        ]);
    }
    t.write(out, cfg.format)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn offline(
    cfg: &CliConfig,
    out: &mut dyn Write,
    mac: &str,
    total: u32,
    segment: u32,
    delay: u32,
    fetch: bool,
    format: ExportArg,
) -> Result<()> {
    if fetch && cfg.out.is_none() {
        return Err(CliError::Usage("--fetch needs --out".into()));
    }
    let (_, mut host, mac) = connected(cfg, mac)?;
    let segments = host.configure_offline(mac, delay, total, segment)?;
    log::info!("{mac}: armed for {segments} segments");
    host.radio_mut().advance((u64::from(delay) + u64::from(total) + 1) * MICROS_PER_SEC);
    let status = host.offline_status(mac).expect("plan was just armed");
    pairs(
        out,
        cfg.format,
        &[
            ("segments", segments.to_string()),
            ("phase", format!("{:?}", status.phase).to_lowercase()),
            ("estimated_flash_used", status.estimated_flash_used.to_string()),
        ],
    )?;
    let entries = host.list_files(mac)?;
    file_table(cfg, out, &entries)?;
    if fetch {
        let dir = out_dir(cfg);
        let mut fetched: Vec<FetchedFile> = Vec::new();
        for e in &entries {
            let f = host.fetch_file(mac, e.file_id, None, |_| {})?;
            write_file(&dir.join(format!("file-{}.bin", e.file_id)), &f.payload)?;
            fetched.push(f);
        }
        let s = Session::from_files(mac, status.schedule.config, &fetched);
        export(cfg, out, &s, format)?;
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(CliError::io(dir.display().to_string()))?;
    }
    fs::write(path, bytes).map_err(CliError::io(path.display().to_string()))
}

fn files(cfg: &CliConfig, out: &mut dyn Write, mac: &str) -> Result<()> {
    let (_, mut host, mac) = connected(cfg, mac)?;
    let entries = host.list_files(mac)?;
    file_table(cfg, out, &entries)
}

fn fetch(cfg: &CliConfig, out: &mut dyn Write, mac_arg: &str, id: u16, resume: bool) -> Result<()> {
    let (env, mut host, mac) = connected(cfg, mac_arg)?;
    let dir = out_dir(cfg);
    let path = dir.join(format!("file-{id}.bin"));
    let part = dir.join(format!("file-{id}.part"));
    let part_meta = dir.join(format!("file-{id}.part.json"));

    let partial = if resume {
        let meta = fs::read_to_string(&part_meta).map_err(CliError::io(part_meta.display().to_string()))?;
        let entry: LogFileEntry =
            serde_json::from_str(&meta).map_err(|e| CliError::Usage(format!("{}: {e}", part_meta.display())))?;
        let bytes = fs::read(&part).map_err(CliError::io(part.display().to_string()))?;
        // Every run replays the environment, including a disconnect the
        // saved bytes already got past.
        let offset = bytes.len() as u32;
        if let Some((k, spec)) = env.rings.iter().enumerate().find(|(k, s)| spec_mac(*k, s) == mac) {
            let mut faults = spec.faults;
            if faults.disconnect_at_byte.is_some_and(|d| d <= offset) {
                faults.disconnect_at_byte = None;
            }
            log::debug!("ring {k}: faults on resume {faults:?}");
            host.radio_mut().set_faults(mac, faults).map_err(HostError::from)?;
        }
        Some(PartialDownload { entry, bytes })
    } else {
        None
    };

    let t0 = host.radio().now_us();
    let mut last_decile = None;
    let result = host.fetch_file(mac, id, partial, |p| {
        let decile = u64::from(p.bytes) * 10 / u64::from(p.total.max(1));
        if last_decile != Some(decile) {
            last_decile = Some(decile);
            log::info!("file {id}: {}/{} bytes", p.bytes, p.total);
        }
    });
    let f = match result {
        Ok(f) => f,
        Err(HostError::Interrupted { file_id, partial }) => {
            write_file(&part, &partial.bytes)?;
            let meta = serde_json::to_string(&partial.entry).expect("entry serializes");
            write_file(&part_meta, meta.as_bytes())?;
            log::warn!("saved {} bytes to {}; rerun with --resume", partial.bytes.len(), part.display());
            return Err(HostError::Interrupted { file_id, partial }.into());
        }
        Err(e) => return Err(e.into()),
    };
    write_file(&path, &f.payload)?;
    for p in [&part, &part_meta] {
        if p.exists() {
            fs::remove_file(p).map_err(CliError::io(p.display().to_string()))?;
        }
    }
    let transfer_s = (host.radio().now_us() - t0) as f64 / MICROS_PER_SEC as f64;
    pairs(
        out,
        cfg.format,
        &[
            ("file_id", id.to_string()),
            ("bytes", f.payload.len().to_string()),
            ("crc", format!("{:08x}", f.entry.crc)),
            ("records", f.records.len().to_string()),
            ("transfer_s", format!("{transfer_s:.3}")),
            ("path", path.display().to_string()),
        ],
    )?;
    Ok(())
}

fn hr_eval(
    cfg: &CliConfig,
    out: &mut dyn Write,
    scenario: Option<&Path>,
    noise: Option<HrCondition>,
    count: usize,
    duration: u32,
) -> Result<()> {
    let seed = cfg.seed.unwrap_or(1);
    let (rows, mae) = match scenario {
        Some(p) => {
            let mut scn = Scenario::load(p)?;
            scn = match noise {
                Some(HrCondition::Clean) => scn.with_noise(false),
                Some(HrCondition::NoisyWalk) => scn.with_snr_db(NOISY_SNR_DB),
                None => scn,
            };
            let truth = scn.hr_at(0);
            let r = run_hr_trial(&p.display().to_string(), scn, duration)?;
            let mae = r.mae_bpm;
            (vec![(0, truth, r)], mae)
        }
        None => {
            let trials = hr_benchmark(count, seed, noise.unwrap_or(HrCondition::Clean), duration)?;
            let mae = pooled_mae(&trials);
            (trials.into_iter().map(|t| (t.index, t.true_bpm, t.result)).collect(), mae)
        }
    };
    let mut t = Table::new(&["TRIAL", "TRUE_BPM", "WINDOWS", "WITHHELD", "MAE_BPM"]);
    for (i, truth, r) in &rows {
        t.row(vec![
            i.to_string(),
            format!("{truth:.2}"),
            r.errors.len().to_string(),
            r.withheld.to_string(),
            format!("{:.3}", r.mae_bpm),
        ]);
    }
    t.write(out, cfg.format)?;
    pairs(out, cfg.format, &[("pooled_mae_bpm", format!("{mae:.3}"))])?;
    if let Some(dir) = &cfg.out {
        let results: Vec<_> = rows.iter().map(|(i, truth, r)| serde_json::json!({ "trial": i, "true_bpm": truth, "result": r })).collect();
        let doc = serde_json::json!({ "seed": seed, "duration_s": duration, "pooled_mae_bpm": mae, "trials": results });
        let path = dir.join("hr-eval.json");
        write_file(&path, (serde_json::to_string_pretty(&doc).expect("json") + "\n").as_bytes())?;
        writeln!(out, "wrote {}", path.display())?;
    }
    Ok(())
}

fn gateway(
    cfg: &CliConfig,
    out: &mut dyn Write,
    addr: std::net::SocketAddr,
    speed: f64,
    assets: Option<PathBuf>,
) -> Result<()> {
    if !(speed.is_finite() && speed > 0.0) {
        return Err(CliError::Usage(format!("invalid speed {speed}")));
    }
    let host = Host::new(environment(cfg)?.build()?);
    let config = GatewayConfig { addr, speed, out_dir: out_dir(cfg), assets, ..GatewayConfig::default() };
    let rt = runtime()?;
    let announce = |a| {
        let _ = writeln!(out, "listening on http://{a}");
        let _ = out.flush();
    };
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    rt.block_on(ringlab_gateway::serve(host, config, announce, shutdown)).map_err(CliError::io(format!("gateway on {addr}")))
}
