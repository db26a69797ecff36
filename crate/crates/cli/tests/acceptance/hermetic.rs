//! Watches this process and its children for socket descriptors while the suite runs.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crate::{ensure, Outcome};

const CHAIN: &str = r#"GET(DB_Finance, table = "events" AND event = "Nobel Prize in Physics 2023", {date}).JOIN(left.date = right.date).GET(DB_Finance, table = "prices" AND symbol = "NVDA", {date, price})"#;

pub struct SocketWatcher {
    stop: Arc<AtomicBool>,
    seen: Arc<Mutex<BTreeSet<String>>>,
    scans: Arc<Mutex<u64>>,
    handle: Mutex<Option<JoinHandle<()>>>,
}

/// Socket inodes open under `pid`, keyed by a readable description.
fn sockets_of(pid: &str, out: &mut BTreeSet<(String, String)>) {
    let Ok(entries) = std::fs::read_dir(format!("/proc/{pid}/fd")) else {
        return;
    };
    for e in entries.flatten() {
        if let Ok(target) = std::fs::read_link(e.path()) {
            let t = target.to_string_lossy();
            if t.starts_with("socket:") {
                out.insert((t.to_string(), format!("pid {pid} fd {}: {t}", e.file_name().to_string_lossy())));
            }
        }
    }
}

fn children(parent: u32) -> Vec<String> {
    let Ok(entries) = std::fs::read_dir("/proc") else {
        return Vec::new();
    };
    entries
        .flatten()
        .filter_map(|e| {
            let pid = e.file_name().to_string_lossy().to_string();
            pid.chars().all(|c| c.is_ascii_digit()).then_some(pid)
        })
        .filter(|pid| {
            // field 4 of stat, after the parenthesised command name
            std::fs::read_to_string(format!("/proc/{pid}/stat"))
                .ok()
                .and_then(|s| s.rsplit_once(')').map(|(_, rest)| rest.split_whitespace().nth(1).map(str::to_string)))
                .flatten()
                .is_some_and(|ppid| ppid == parent.to_string())
        })
        .collect()
}

impl SocketWatcher {
    pub fn start() -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let seen = Arc::new(Mutex::new(BTreeSet::new()));
        let scans = Arc::new(Mutex::new(0));
        let handle = {
            let (stop, seen, scans) = (stop.clone(), seen.clone(), scans.clone());
            // descriptors inherited from whoever launched the suite are not ours
            let mut inherited = BTreeSet::new();
            sockets_of("self", &mut inherited);
            let inherited: BTreeSet<String> = inherited.into_iter().map(|(inode, _)| inode).collect();
            std::thread::spawn(move || {
                let me = std::process::id();
                while !stop.load(Ordering::Relaxed) {
                    let mut found = BTreeSet::new();
                    sockets_of("self", &mut found);
                    for child in children(me) {
                        sockets_of(&child, &mut found);
                    }
                    seen.lock()
                        .unwrap()
                        .extend(found.into_iter().filter(|(inode, _)| !inherited.contains(inode)).map(|(_, d)| d));
                    *scans.lock().unwrap() += 1;
                    std::thread::sleep(Duration::from_millis(2));
                }
            })
        };
        SocketWatcher {
            stop,
            seen,
            scans,
            handle: Mutex::new(Some(handle)),
        }
    }

    /// Stop polling and return the sockets observed and the number of scans.
    pub fn finish(&self) -> (BTreeSet<String>, u64) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.lock().unwrap().take() {
            let _ = h.join();
        }
        (self.seen.lock().unwrap().clone(), *self.scans.lock().unwrap())
    }
}

fn copy_dir(from: &Path, to: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(to)?;
    for e in std::fs::read_dir(from)? {
        let p = e?.path();
        let dest = to.join(p.file_name().unwrap());
        if p.is_dir() {
            copy_dir(&p, &dest)?;
        } else {
            std::fs::copy(&p, &dest)?;
        }
    }
    Ok(())
}

fn errag(config: &Path, args: &[&str]) -> Result<Output, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_errag"))
        .arg("--config")
        .arg(config)
        .args(args)
        .env_remove("ERRAG_CONFIG")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(out)
    } else {
        Err(format!("errag {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn json(out: &Output) -> Result<serde_json::Value, String> {
    serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())
}

pub fn end_to_end(watcher: &SocketWatcher) -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    copy_dir(&Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures"), dir.path()).map_err(|e| e.to_string())?;
    let config = dir.path().join("config.json");
    let gateway = &serde_json::from_str::<serde_json::Value>(&std::fs::read_to_string(&config).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?["gateway"]["mode"];
    ensure(gateway == "Mock", || format!("fixture gateway mode is {gateway}"))?;

    errag(&config, &["ingest", "--json"])?;
    let rows = json(&errag(&config, &["run", "--json", CHAIN])?)?;
    ensure(rows[0]["g2.price"] == 435.17, || format!("chain gave {rows}"))?;
    let eval_set = dir.path().join("eval.jsonl");
    let report = json(&errag(&config, &["eval", "--json", "--judge", eval_set.to_str().unwrap()])?)?;
    ensure(report["n"] == 4 && report["stem_accuracy"] == 0.75, || format!("eval gave {report}"))?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 30.0, || format!("end-to-end took {secs:.1}s"))?;

    let (sockets, scans) = watcher.finish();
    ensure(sockets.is_empty(), || format!("socket descriptors observed: {sockets:?}"))?;
    Ok(format!(
        "ingest, run, eval in {secs:.2}s; mock gateway; {scans} descriptor scans of the suite, 0 sockets"
    ))
}
