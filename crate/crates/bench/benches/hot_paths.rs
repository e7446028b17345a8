use std::hint::black_box;
use std::path::Path;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};

use ringlab_core::dsp::{estimate_hr, HR_WINDOW_S};
use ringlab_core::hostkit::{Host, Session};
use ringlab_core::proto::{decode_message, encode_message, Command, Message, StreamPacket, TargetMode};
use ringlab_core::ringsim::sensors::PPG_IR_CHANNEL;
use ringlab_core::ringsim::{Ring, Scenario};
use ringlab_core::transport::Environment;
use ringlab_core::{Mac, SensorConfig, MICROS_PER_SEC};

fn recorded_session(secs: u32) -> Session {
    let mut h = Host::new(Environment::with_rings(1, 1).build().unwrap());
    let mac = h.radio().macs()[0];
    h.connect(mac).unwrap();
    let mut s = h.start_session(mac, SensorConfig::reference(), secs * 1000).unwrap();
    h.run_until_ended(&mut s, u64::from(secs + 5) * MICROS_PER_SEC).unwrap();
    s
}

fn frame_codec(c: &mut Criterion) {
    let s = recorded_session(1);
    let packet = Message::Stream(StreamPacket { seq: 7, base_timestamp_us: s.records[0].timestamp_us, records: s.records[..5].to_vec() });
    let bytes = encode_message(&packet).unwrap();
    let mut g = c.benchmark_group("frame_codec");
    g.throughput(Throughput::Bytes(bytes.len() as u64));
    g.bench_function("encode_stream_packet", |b| b.iter(|| encode_message(black_box(&packet)).unwrap()));
    g.bench_function("decode_stream_packet", |b| b.iter(|| decode_message(black_box(&bytes)).unwrap()));
    g.finish();
}

fn scheduler_advance(c: &mut Criterion) {
    let mut g = c.benchmark_group("ring_scheduler");
    g.throughput(Throughput::Elements(1000));
    g.bench_function("stream_10s_all_sensors", |b| {
        b.iter_batched(
            || {
                let mut r = Ring::new(Mac::for_index(1), Scenario::resting(1));
                r.apply_command(&Command::SetMode { mode: TargetMode::Streaming, duration_ms: 0 }).unwrap();
                r
            },
            |mut r| {
                r.advance(10 * MICROS_PER_SEC);
                r.take_emissions()
            },
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

fn hr_estimate(c: &mut Criterion) {
    let s = recorded_session(HR_WINDOW_S as u32 + 1);
    let ir: Vec<f64> = s
        .records
        .iter()
        .filter_map(|r| r.ppg.map(|p| f64::from(p[PPG_IR_CHANNEL])))
        .take(HR_WINDOW_S as usize * 100)
        .collect();
    c.bench_function("hr_estimate_8s_window", |b| b.iter(|| estimate_hr(black_box(&ir), 100.0, 0)));
}

fn bulk_fetch(c: &mut Criterion) {
    let env = Environment::parse("[[ring]]\nprelog = { total_s = 30, segment_s = 30 }\n", Path::new(".")).unwrap();
    let mut h = Host::new(env.build().unwrap());
    let mac = h.radio().macs()[0];
    h.connect(mac).unwrap();
    let entry = h.list_files(mac).unwrap()[0];
    let mut g = c.benchmark_group("bulk_fetch");
    g.throughput(Throughput::Bytes(u64::from(entry.size)));
    g.sample_size(20);
    g.bench_function("segment_30s", |b| b.iter(|| h.fetch_file(mac, entry.file_id, None, |_| {}).unwrap()));
    g.finish();
}

criterion_group!(benches, frame_codec, scheduler_advance, hr_estimate, bulk_fetch);
criterion_main!(benches);
