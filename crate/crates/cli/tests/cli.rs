use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn ringlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ringlab")).current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn with_env(text: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("env.toml"), text).unwrap();
    dir
}

/// Value column of a `FIELD VALUE` table row.
fn field(out: &str, name: &str) -> String {
    out.lines()
        .find_map(|l| l.strip_prefix(name).filter(|r| r.starts_with([' ', '\t'])).map(|r| r.trim().to_string()))
        .unwrap_or_else(|| panic!("no `{name}` in:\n{out}"))
}

#[test]
fn scan_lists_two_rings_by_signal_strength() {
    let dir = with_env("[[ring]]\nname = \"far\"\nrssi_dbm = -75\n[[ring]]\nname = \"near\"\nrssi_dbm = -40\n");
    let o = ringlab(dir.path(), &["--env", "env.toml", "--format", "tsv", "scan"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<Vec<String>> =
        stdout(&o).lines().map(|l| l.split('\t').map(str::to_string).collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0], ["MAC", "NAME", "RSSI", "BATTERY", "FW"]);
    assert_eq!((rows[1][1].as_str(), rows[2][1].as_str()), ("near", "far"));
    let rssi: Vec<i32> = rows[1..].iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(rssi[0] > rssi[1]);
}

#[test]
fn calibrate_trims_an_injected_offset() {
    let dir = with_env("[[ring]]\noffset_s = 5.0\n");
    let o = ringlab(dir.path(), &["--env", "env.toml", "calibrate", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    // Fixed 15 ms legs: the first probe sees the full 5 s and trims it; the
    // second sees nothing left.
    let first: i64 = out.lines().nth(1).unwrap().split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!((first - 5_000_000).abs() <= 1_000, "{out}");
    assert!(field(&out, "final_offset_us").parse::<i64>().unwrap().abs() <= 1_000);
    assert_eq!(field(&out, "iterations"), "2");
    assert_eq!(field(&out, "converged"), "true");
}

#[test]
fn corrupted_fetch_exits_with_integrity_error() {
    let dir = with_env("[[ring]]\nprelog = { total_s = 30, segment_s = 30 }\nfaults = { corrupt_byte = 1234 }\n");
    let o = ringlab(dir.path(), &["--env", "env.toml", "--out", "dl", "fetch", "1", "1"]);
    assert_eq!(o.status.code(), Some(4));
    let err = stderr(&o);
    assert!(err.contains("CrcMismatch"), "{err}");
    assert!(err.lines().any(|l| l.starts_with("error code=CrcMismatch exit=4 message=")), "{err}");
    assert!(!dir.path().join("dl/file-1.bin").exists());
}

#[test]
fn interrupted_fetch_resumes_to_identical_bytes() {
    let dir = with_env("[[ring]]\nprelog = { total_s = 30, segment_s = 30 }\nfaults = { disconnect_at_byte = 40000 }\n");
    let o = ringlab(dir.path(), &["--env", "env.toml", "--out", "dl", "fetch", "1", "1"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("error code=Disconnected"));
    assert_eq!(fs::read(dir.path().join("dl/file-1.part")).unwrap().len(), 40_000);

    let o = ringlab(dir.path(), &["--env", "env.toml", "--out", "dl", "fetch", "1", "1", "--resume"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!dir.path().join("dl/file-1.part").exists());

    fs::write(dir.path().join("clean.toml"), "[[ring]]\nprelog = { total_s = 30, segment_s = 30 }\n").unwrap();
    let o = ringlab(dir.path(), &["--env", "clean.toml", "--out", "ref", "fetch", "1", "1"]);
    assert!(o.status.success());
    assert_eq!(fs::read(dir.path().join("dl/file-1.bin")).unwrap(), fs::read(dir.path().join("ref/file-1.bin")).unwrap());
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn same_seed_same_bytes() {
    let dir = with_env("[link]\nloss_rate = 0.05\n[[ring]]\noffset_s = -3.0\ndrift_ppm = 40\njitter = true\n");
    let run = |seed: &str, out: &str| {
        let args = ["--env", "env.toml", "--seed", seed, "--out", out, "stream", "1", "--duration", "12"];
        let o = ringlab(dir.path(), &[&args[..], &["--calibrate", "--annotate", "3:a", "--annotate", "9:b"]].concat());
        assert!(o.status.success(), "{}", stderr(&o));
        let o = ringlab(dir.path(), &["--env", "env.toml", "--seed", seed, "--out", out, "hr-eval", "--count", "2", "--duration", "20"]);
        assert!(o.status.success(), "{}", stderr(&o));
        tree(&dir.path().join(out))
    };
    let a = run("9", "a");
    let b = run("9", "b");
    let c = run("10", "c");
    assert_eq!(a.len(), 5);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn offline_plan_and_download() {
    let dir = tempfile::tempdir().unwrap();
    let o = ringlab(dir.path(), &["--format", "tsv", "--out", "o", "offline", "1", "--total", "90", "--segment", "30", "--fetch"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(field(&out, "segments"), "3");
    assert_eq!(field(&out, "phase"), "complete");
    for id in 1..=3 {
        assert_eq!(fs::read(dir.path().join(format!("o/file-{id}.bin"))).unwrap().len(), 30 * 100 * 38);
    }
    let exported = out.lines().find_map(|l| l.strip_prefix("exported ")).unwrap();
    let meta = fs::read_to_string(dir.path().join(exported).join("session.json")).unwrap();
    assert!(meta.contains("\"record_count\": 9000"), "{meta}");
}

#[test]
fn annotate_reads_tags_from_stdin() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_ringlab"))
        .current_dir(dir.path())
        .args(["annotate", "1", "--duration", "3", "--speed", "10"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"@1 sitting\n@2 walking\n").unwrap();
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success());
    let out = stdout(&o);
    let acks: Vec<&str> = out.lines().filter(|l| l.starts_with("ack ")).collect();
    assert_eq!(acks.len(), 2, "{out}");
    assert!(acks[0].ends_with(" sitting") && acks[1].ends_with(" walking"));
    let start: u64 = field(&out, "start_us").parse().unwrap();
    let t: Vec<u64> = acks.iter().map(|a| a.split(' ').nth(1).unwrap().parse().unwrap()).collect();
    assert!(t[0] - start >= 1_000_000 && t[1] - t[0] >= 1_000_000 - 1_000, "{t:?}");
    assert_eq!(field(&out, "ppg_records"), "300");
}

#[test]
fn bad_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = ringlab(dir.path(), &["info", "7"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("error code=Usage"));
    let o = ringlab(dir.path(), &["--env", "missing.toml", "scan"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("error code=Environment"));
    let o = ringlab(dir.path(), &["offline", "1", "--total", "10", "--segment", "30"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("error code=BadArgument"));
}

#[test]
fn sim_writes_a_reusable_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = ringlab(dir.path(), &["--rings", "3", "--seed", "4", "sim", "--duration", "0", "--write-env", "room.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = ringlab(dir.path(), &["--env", "room.toml", "--format", "tsv", "scan"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 4);
}
