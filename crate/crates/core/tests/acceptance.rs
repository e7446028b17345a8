//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ringlab_core::hostkit::{
    export_session, hr_benchmark, pooled_mae, ExportFormat, HrCondition, Host, HostError, Session,
};
use ringlab_core::proto::{
    crc32, decode_message, encode_message, Command, DeviceEvent, Message, SampleRecord, TargetMode, CHUNK_DATA_MAX,
};
use ringlab_core::ringsim::{BatteryState, Emission, FlashStore, Ring, RtcState, Scenario, FLASH_CAPACITY};
use ringlab_core::transport::{Environment, FaultProfile, Latency, LinkParams, Radio};
use ringlab_core::{Mac, Modality, SensorConfig, MICROS_PER_SEC};

const SEED: u64 = 20_260_101;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Bitwise CRC-32/ISO-HDLC, independent of the production implementation.
fn reference_crc32(data: &[u8]) -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for &b in data {
        crc ^= u32::from(b);
        for _ in 0..8 {
            crc = if crc & 1 != 0 { (crc >> 1) ^ 0xEDB8_8320 } else { crc >> 1 };
        }
    }
    !crc
}

fn stream_cmd(duration_ms: u32) -> Command {
    Command::SetMode { mode: TargetMode::Streaming, duration_ms }
}

fn framing() -> Result<Outcome, HostError> {
    let started = Instant::now();
    let mut radio = Environment::with_rings(1, SEED).build().expect("default environment");
    let mac = radio.macs()[0];
    radio.connect(mac)?;
    radio.request(mac, &stream_cmd(600_000))?;
    let mut packets = Vec::new();
    let mut ended = None;
    while ended.is_none() && radio.now_us() < 620 * MICROS_PER_SEC {
        radio.advance(MICROS_PER_SEC);
        for n in radio.poll(mac)? {
            match n.message {
                Message::Stream(p) => packets.push(p),
                Message::Event(DeviceEvent::SessionEnded { packets }) => ended = Some(packets),
                _ => {}
            }
        }
    }
    let wall = started.elapsed().as_secs_f64();
    let n = packets.len();
    let five_each = packets.iter().all(|p| p.records.len() == 5);
    let gap_free = packets.iter().enumerate().all(|(i, p)| p.seq == i as u32);
    let recs: Vec<&SampleRecord> = packets.iter().flat_map(|p| &p.records).collect();
    let counts = Modality::ALL.map(|m| recs.iter().filter(|r| r.has(m)).count());
    let pass = n == 12_000
        && ended == Some(12_000)
        && five_each
        && gap_free
        && counts == [60_000; 3]
        && wall < 10.0;
    Ok(outcome(
        pass,
        format!(
            "packets={n} five_records_each={five_each} gap_free={gap_free} ppg/imu/temp={counts:?} wall={wall:.2}s (limit 10 s)"
        ),
    ))
}

struct CalTrial {
    iterations: usize,
    converged: bool,
    residual_us: i64,
}

fn calibration_trials(params: &LinkParams, seed: u64) -> Result<Vec<CalTrial>, HostError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..100u64)
        .map(|i| {
            let offset_us = rng.random_range(-60_000_000i64..=60_000_000);
            let mut radio = Radio::new(*params, seed + i);
            let mac = radio.add_ring(
                Ring::new(Mac::for_index(1), Scenario::resting(i)).with_rtc(RtcState::new(offset_us, 0.0)),
                -50.0,
            );
            let mut host = Host::new(radio);
            host.connect(mac)?;
            let (iterations, converged) = match host.calibrate(mac) {
                Ok(r) => (r.iterations.len(), r.converged),
                Err(HostError::NotConverged(r)) => (r.iterations.len(), false),
                Err(e) => return Err(e),
            };
            let now = host.radio().now_us();
            let residual_us = host.radio().ring(mac).expect("ring").rtc().error_us(now);
            Ok(CalTrial { iterations, converged, residual_us })
        })
        .collect()
}

fn calibration() -> Result<Outcome, HostError> {
    let sym = LinkParams::symmetric(Latency::between(10.0, 40.0));
    let jitter_us = sym.latency_up.jitter_ms * 1e3;
    let trials = calibration_trials(&sym, SEED)?;
    let all_converged = trials.iter().all(|t| t.converged && t.iterations <= 3);
    let max_iter = trials.iter().map(|t| t.iterations).max().unwrap_or(0);
    let worst = trials.iter().map(|t| t.residual_us.abs()).max().unwrap_or(0);
    let med = median(trials.iter().map(|t| t.residual_us.abs() as f64).collect());

    let asym = LinkParams { latency_up: Latency::fixed(10.0), latency_down: Latency::fixed(50.0), ..LinkParams::default() };
    let asym_trials = calibration_trials(&asym, SEED + 1)?;
    let asym_med = median(asym_trials.iter().map(|t| t.residual_us.abs() as f64).collect());
    let asym_ok = asym_trials.iter().all(|t| t.converged) && (asym_med - 20_000.0).abs() <= 5_000.0;

    let pass = all_converged && worst <= 1_000_000 && med <= 2.0 * jitter_us && asym_ok;
    Ok(outcome(
        pass,
        format!(
            "100/100 converged<=3={all_converged} max_iter={max_iter} worst_residual={:.1}ms median={:.2}ms (limit {:.0}ms) asym10/50_median={:.2}ms (20+-5)",
            worst as f64 / 1e3,
            med / 1e3,
            2.0 * jitter_us / 1e3,
            asym_med / 1e3
        ),
    ))
}

fn sorted(mut v: Vec<SampleRecord>) -> Vec<SampleRecord> {
    v.sort();
    v
}

fn offline() -> Result<Outcome, HostError> {
    let env = Environment::with_rings(1, SEED + 2);

    // Offline: arm, log 2 h in 30 min segments, fetch and verify.
    let mut h = Host::new(env.build().expect("environment"));
    let mac = h.radio().macs()[0];
    h.connect(mac)?;
    let planned = h.configure_offline(mac, 0, 7_200, 1_800)?;
    h.radio_mut().advance(7_201 * MICROS_PER_SEC);
    let entries = h.list_files(mac)?;
    let mut offline_records = Vec::new();
    for e in &entries {
        let f = h.fetch_file(mac, e.file_id, None, |_| {})?;
        offline_records.extend(f.records);
    }

    // Online: the same ring model streams from the same instant. The status
    // read mirrors the one arming does, so the start command lands on the
    // same device tick.
    let mut h2 = Host::new(env.build().expect("environment"));
    h2.connect(mac)?;
    h2.status(mac)?;
    h2.radio_mut().request(mac, &stream_cmd(7_200_000))?;
    let mut s = Session::new(mac, SensorConfig::reference(), 0);
    h2.run_until_ended(&mut s, 7_210 * MICROS_PER_SEC)?;
    let identical = sorted(offline_records.clone()) == sorted(s.records.clone());

    // Bulk pacing: a 160 000 B file.
    let mut flash = FlashStore::with_capacity(FLASH_CAPACITY);
    let payload: Vec<u8> = (0..160_000u32).map(|i| (i * 7 % 251) as u8).collect();
    let entry = flash.store_segment(0, &payload).expect("fits").expect("non-empty");
    let mut radio = Radio::new(LinkParams::default(), SEED);
    let bulk_mac = radio.add_ring(Ring::new(Mac::for_index(9), Scenario::resting(1)).with_flash(flash), -50.0);
    radio.connect(bulk_mac)?;
    radio.request(bulk_mac, &Command::OpenFile { file_id: entry.file_id })?;
    let t0 = radio.now_us();
    let mut got = Vec::new();
    while got.len() < payload.len() {
        let c = radio.bulk_read(bulk_mac, entry.file_id, got.len() as u32, CHUNK_DATA_MAX as u16)?;
        got.extend_from_slice(&c.data);
    }
    let bulk_s = (radio.now_us() - t0) as f64 / 1e6;

    let pass = planned == 4
        && entries.len() == 4
        && identical
        && !offline_records.is_empty()
        && got == payload
        && bulk_s >= 10.0;
    Ok(outcome(
        pass,
        format!(
            "entries={} crc_verified={} offline_records={} online_records={} multiset_equal={identical} 160000B_transfer={bulk_s:.3}s (>=10.0)",
            entries.len(),
            entries.len(),
            offline_records.len(),
            s.records.len()
        ),
    ))
}

/// Arm a plan on a bare ring and run it until `stop` matches an event.
fn run_until_event(mut ring: Ring, total_s: u32, stop: impl Fn(&DeviceEvent) -> bool) -> (Ring, Option<u64>) {
    ring.apply_command(&Command::ScheduleOffline { start_delay_s: 0, total_s, segment_s: 1_800 }).expect("plan");
    let t0 = ring.now_us();
    let limit = t0 + u64::from(total_s) * MICROS_PER_SEC + MICROS_PER_SEC;
    while ring.now_us() < limit {
        ring.advance(600 * MICROS_PER_SEC);
        for Emission { at_us, message } in ring.take_emissions() {
            if let Message::Event(ev) = &message {
                if stop(ev) {
                    return (ring, Some(at_us - t0));
                }
            }
        }
    }
    (ring, None)
}

fn capacity_and_battery() -> Outcome {
    // Oracle: records that fit in flash, at 100 records per second.
    let expect_full_s = (FLASH_CAPACITY / 38) as f64 / 100.0;
    let mains = BatteryState { external_power: true, ..BatteryState::full() };
    let ring = Ring::new(Mac::for_index(1), Scenario::resting(SEED)).with_battery(mains);
    let (ring, full_at) = run_until_event(ring, 12 * 3_600, |e| *e == DeviceEvent::FlashFull);
    let full_s = full_at.map_or(f64::NAN, |t| t as f64 / 1e6);
    let sizes: u64 = ring.flash().entries().iter().map(|e| u64::from(e.size)).sum();
    let cap_ok = (full_s - expect_full_s).abs() <= 1_800.0 && sizes == ring.flash().used() && sizes <= FLASH_CAPACITY;

    // Oracle: 15 mAh at 1.875 mA.
    let expect_empty_s = 15.0 / 1.875 * 3_600.0;
    let ring = Ring::new(Mac::for_index(2), Scenario::resting(SEED));
    let (_, empty_at) = run_until_event(ring, 10 * 3_600, |e| *e == DeviceEvent::BatteryEmpty);
    let empty_s = empty_at.map_or(f64::NAN, |t| t as f64 / 1e6);
    let bat_ok = ((empty_s - expect_empty_s) / expect_empty_s).abs() <= 0.01;

    outcome(
        cap_ok && bat_ok,
        format!(
            "flash_full={:.3}h (expect {:.3}h +-0.5h) segments={} battery_empty={:.4}h (expect {:.2}h +-1%)",
            full_s / 3_600.0,
            expect_full_s / 3_600.0,
            ring_segments(sizes),
            empty_s / 3_600.0,
            expect_empty_s / 3_600.0
        ),
    )
}

fn ring_segments(bytes: u64) -> u64 {
    bytes.div_ceil(1_800 * 100 * 38)
}

fn flip(bytes: &mut [u8], bit: usize) {
    bytes[bit / 8] ^= 1 << (bit % 8);
}

fn integrity() -> Result<Outcome, HostError> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);

    // Frames: every kind the link carries, captured from a short session
    // plus command, file and chunk traffic.
    let mut ring = Ring::new(Mac::for_index(1), Scenario::resting(SEED));
    ring.apply_command(&stream_cmd(2_000)).expect("stream");
    ring.advance(2_100_000);
    let mut messages: Vec<Message> = ring.take_emissions().into_iter().map(|e| e.message).collect();
    messages.push(Message::Command(Command::CalibProbe { host_time: ringlab_core::EpochTime::from_micros(1 << 50) }));
    messages.push(Message::Command(Command::ReadChunk { file_id: 3, offset: 19_000, max_len: 1_000 }));
    messages.push(Message::Chunk(ringlab_core::proto::Chunk { file_id: 3, offset: 0, data: vec![0xA5; 1_000] }));
    let frames: Vec<Vec<u8>> = messages.iter().map(|m| encode_message(m).expect("encodes")).collect();
    // The frame checksum covers the kind byte and the payload.
    let crc_agrees = frames.iter().all(|f| {
        let covered: Vec<u8> = [&f[..1], &f[3..f.len() - 4]].concat();
        reference_crc32(&covered).to_le_bytes() == f[f.len() - 4..]
    });
    let mut frame_missed = 0;
    for _ in 0..5_000 {
        let mut f = frames[rng.random_range(0..frames.len())].clone();
        let bit = rng.random_range(0..f.len() * 8);
        flip(&mut f, bit);
        if decode_message(&f).is_ok() {
            frame_missed += 1;
        }
    }

    // Segment payloads: the host check is crc32(payload) == entry.crc.
    let mut h = Host::new(Environment::with_rings(1, SEED + 3).build().expect("environment"));
    let mac = h.radio().macs()[0];
    h.connect(mac)?;
    h.configure_offline(mac, 0, 60, 20)?;
    h.radio_mut().advance(61 * MICROS_PER_SEC);
    let entries = h.list_files(mac)?;
    let files: Vec<_> = entries
        .iter()
        .map(|e| h.fetch_file(mac, e.file_id, None, |_| {}))
        .collect::<Result<_, _>>()?;
    let seg_crc_agrees = files.iter().all(|f| reference_crc32(&f.payload) == f.entry.crc);
    let mut seg_missed = 0;
    for _ in 0..4_950 {
        let f = &files[rng.random_range(0..files.len())];
        let mut p = f.payload.clone();
        let bit = rng.random_range(0..p.len() * 8);
        flip(&mut p, bit);
        if crc32(&p) == f.entry.crc {
            seg_missed += 1;
        }
    }
    // And the last 50 through the full download path.
    let mut fetch_missed = 0;
    for _ in 0..50 {
        let e = entries[rng.random_range(0..entries.len())];
        let at = rng.random_range(0..e.size);
        h.radio_mut().set_faults(mac, FaultProfile { corrupt_byte: Some(at), disconnect_at_byte: None })?;
        match h.fetch_file(mac, e.file_id, None, |_| {}) {
            Err(HostError::CrcMismatch { .. }) => {}
            _ => fetch_missed += 1,
        }
    }
    let missed = frame_missed + seg_missed + fetch_missed;
    Ok(outcome(
        missed == 0 && crc_agrees && seg_crc_agrees,
        format!(
            "flips=10000 undetected={missed} (frames {frame_missed}/5000, segments {seg_missed}/4950, fetches {fetch_missed}/50) reference_crc_agrees={}",
            crc_agrees && seg_crc_agrees
        ),
    ))
}

fn hr() -> Result<Outcome, HostError> {
    let started = Instant::now();
    let clean = hr_benchmark(20, SEED, HrCondition::Clean, 60)?;
    let noisy = hr_benchmark(20, SEED, HrCondition::NoisyWalk, 60)?;
    let wall = started.elapsed().as_secs_f64();
    let (mc, mn) = (pooled_mae(&clean), pooled_mae(&noisy));
    let withheld: usize = clean.iter().chain(&noisy).map(|t| t.result.withheld).sum();
    let scored: usize = clean.iter().chain(&noisy).map(|t| t.result.errors.len()).sum();
    Ok(outcome(
        mc <= 1.0 && mn <= 5.18 && wall < 30.0,
        format!(
            "clean_mae={mc:.3} (<=1.0) noisy_walk_10dB_mae={mn:.3} (<=5.18) windows={scored} withheld={withheld} wall={wall:.2}s (limit 30 s)"
        ),
    ))
}

/// Full workflow into `dir`: calibrate, live session with annotations over a
/// lossy link, offline log and fetch; both export formats.
fn workflow(dir: &Path) -> Result<(), HostError> {
    let env = Environment::parse(
        r#"
        seed = 99
        [link]
        loss_rate = 0.05
        latency_up = { mean_ms = 20.0, jitter_ms = 8.0 }
        latency_down = { mean_ms = 20.0, jitter_ms = 8.0 }
        [[ring]]
        offset_s = -12.5
        drift_ppm = 20.0
        "#,
        Path::new("."),
    )
    .expect("environment");
    let mut h = Host::new(env.build().expect("environment"));
    let mac = h.discover(MICROS_PER_SEC)[0].mac;
    h.connect(mac)?;
    h.calibrate(mac)?;
    let mut s = h.start_session(mac, SensorConfig::reference(), 0)?;
    for tag in ["rest", "walk", "rest again"] {
        h.run_session(&mut s, 5 * MICROS_PER_SEC)?;
        h.annotate(&mut s, tag)?;
    }
    h.run_session(&mut s, 5 * MICROS_PER_SEC)?;
    h.stop_session(&mut s)?;
    export_session(&s, &dir.join("online-csv"), ExportFormat::Csv)?;
    export_session(&s, &dir.join("online-bin"), ExportFormat::Binary)?;

    h.configure_offline(mac, 0, 60, 30)?;
    h.radio_mut().advance(61 * MICROS_PER_SEC);
    let mut files = Vec::new();
    for e in h.list_files(mac)? {
        files.push(h.fetch_file(mac, e.file_id, None, |_| {})?);
    }
    let off = Session::from_files(mac, s.config, &files);
    export_session(&off, &dir.join("offline-csv"), ExportFormat::Csv)?;
    export_session(&off, &dir.join("offline-bin"), ExportFormat::Binary)?;
    Ok(())
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).expect("readable").map(|e| e.expect("entry").path()) {
            if e.is_dir() {
                stack.push(e);
            } else {
                let rel = e.strip_prefix(dir).expect("inside").display().to_string();
                out.push((rel, fs::read(&e).expect("readable")));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Result<Outcome, HostError> {
    let a = tempfile::tempdir()?;
    let b = tempfile::tempdir()?;
    workflow(a.path())?;
    workflow(b.path())?;
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    let names: BTreeSet<&str> = ta.iter().map(|(n, _)| n.as_str()).collect();
    let bytes: usize = ta.iter().map(|(_, d)| d.len()).sum();
    Ok(outcome(
        ta == tb && names.len() == 12,
        format!("files={} bytes={bytes} byte_identical={}", names.len(), ta == tb),
    ))
}

fn main() {
    type Criterion = (&'static str, fn() -> Result<Outcome, HostError>);
    let criteria: [Criterion; 7] = [
        ("stream-framing", framing),
        ("calibration", calibration),
        ("offline-path", offline),
        ("capacity-battery", || Ok(capacity_and_battery())),
        ("integrity", integrity),
        ("hr-pipeline", hr),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let t = Instant::now();
        let o = run().unwrap_or_else(|e| outcome(false, format!("error: {e}")));
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
