use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use tower::ServiceExt;

use examlab_core::corpus::QuestionKind;
use examlab_core::session::AnswerPayload;
use examlab_core::store::{DocumentStore, Expect, FileStore};
use examlab_core::{synth, Platform, PlatformConfig};
use examlab_server::{router, AppState};

const REGISTRY: &str = r#"
[[providers]]
provider_id = "mock-a"
kind = "mock"
endpoint = "mock://local"
model_name = "hashed"
rpm_limit = 60000
mock = { type = "hashed" }

[[providers]]
provider_id = "mock-b"
kind = "mock"
endpoint = "mock://local"
model_name = "full"
rpm_limit = 60000
mock = { type = "full_marks" }
"#;

struct Env {
    dir: tempfile::TempDir,
}

impl Env {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn store(&self) -> PathBuf {
        self.path("store")
    }

    fn write(&self, name: &str, body: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, body).unwrap();
        p
    }

    fn run(&self, args: &[&str]) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_examlab"));
        for var in [
            "EXAMLAB_STORE",
            "EXAMLAB_PROVIDERS",
            "EXAMLAB_SALT",
            "EXAMLAB_CONFIG",
        ] {
            cmd.env_remove(var);
        }
        cmd.arg("--store")
            .arg(self.store())
            .args(args)
            .output()
            .unwrap()
    }

    fn ingest_standard(&self) -> Vec<String> {
        let mut paths = Vec::new();
        for (i, doc) in synth::standard_corpus().documents.iter().enumerate() {
            paths.push(self.write(&format!("exam-{i}.json"), doc));
        }
        paths.push(self.write("small.json", &synth::small_cs_exam_json()));
        let mut args = vec!["ingest"];
        args.extend(paths.iter().map(|p| p.to_str().unwrap()));
        let out = self.run(&args);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        stdout(&out).lines().map(String::from).collect()
    }

    fn platform(&self) -> Platform {
        Platform::open_dir(self.store(), PlatformConfig::default()).unwrap()
    }

    /// Two students, every question answered; returns submission ids.
    fn populate(&self) -> Vec<String> {
        let p = self.platform();
        let mut ids = Vec::new();
        for (n, email) in ["a@liceu.ro", "b@liceu.ro"].into_iter().enumerate() {
            let key = p.identify(email).unwrap();
            let exam = p.corpus.get_exam("info-2023-test").unwrap();
            let mut s = p.sessions.start_or_resume(&key, &exam.exam_id).unwrap();
            for (_, q) in exam.questions() {
                let payload = match q.kind {
                    QuestionKind::OpenText => AnswerPayload::Text {
                        text: format!("citesc n și afișez suma cifrelor ({n})"),
                    },
                    _ => AnswerPayload::Choice {
                        selected: [["a", "b"][n].to_string()].into(),
                    },
                };
                s = p
                    .sessions
                    .record_answer(&s.session_id, &q.question_id, payload, s.version)
                    .unwrap();
            }
            ids.extend(
                p.sessions
                    .submit(&s.session_id)
                    .unwrap()
                    .into_iter()
                    .map(|s| s.submission_id),
            );
        }
        ids
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn summary(o: &Output) -> serde_json::Value {
    serde_json::from_str(stdout(o).trim()).unwrap_or_else(|e| panic!("{e}: {}", stderr(o)))
}

#[test]
fn ingest_exit_codes() {
    let env = Env::new();
    let good = env.write("good.json", &synth::small_cs_exam_json());
    let out = env.run(&["ingest", good.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "info-2023-test\n");

    let tampered = synth::small_cs_exam_json()
        .replace("\"points\": 4", "\"points\": 3")
        .replace("info-2023-test", "info-2023-bad");
    let bad = env.write("bad.json", &tampered);
    let out = env.run(&["ingest", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).is_empty());
    let err = stderr(&out);
    assert!(
        err.contains("question II.1") && err.contains("field "),
        "{err}"
    );

    let out = env.run(&["ingest", env.path("absent.json").to_str().unwrap()]);
    assert_eq!(code(&out), 2);

    // Worst outcome wins; valid files are still ingested.
    let other = env.write("other.json", &synth::standard_corpus().documents[0]);
    let out = env.run(&[
        "ingest",
        other.to_str().unwrap(),
        bad.to_str().unwrap(),
        "/nonexistent/x.json",
    ]);
    assert_eq!(code(&out), 2);
    assert_eq!(stdout(&out).lines().count(), 1);

    let out = env.run(&["ingest", env.write("junk.json", "{").to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn validate_reports_corruption() {
    let env = Env::new();
    assert_eq!(code(&env.run(&["validate"])), 0);
    env.ingest_standard();
    let out = env.run(&["validate"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).is_empty());

    let store = FileStore::open(env.store()).unwrap();
    store
        .put("exams", "info-2022-broken", b"{\"exam\":", Expect::Absent)
        .unwrap();
    let out = env.run(&["validate"]);
    assert_eq!(code(&out), 1);
    let listing = stdout(&out);
    assert_eq!(listing.lines().count(), 1);
    assert!(
        listing.contains("info-2022-broken") && listing.contains("record"),
        "{listing}"
    );
}

async fn http_export(store: &Path, query: &str) -> Vec<u8> {
    let platform = Platform::open_dir(store, PlatformConfig::default()).unwrap();
    let app = router(AppState::new(platform, Some("tok".into())), None);
    let res = app
        .oneshot(
            Request::builder()
                .uri(format!("/api/admin/export{query}"))
                .header("authorization", "Bearer tok")
                .body(Body::empty())
                .unwrap(),
        )
        .await
        .unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    res.into_body().collect().await.unwrap().to_bytes().to_vec()
}

#[tokio::test]
async fn export_matches_http_byte_for_byte() {
    let env = Env::new();
    let out = env.run(&["export"]);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());

    env.ingest_standard();
    let subs = env.populate();
    let cases: [(&[&str], &str); 4] = [
        (&[], ""),
        (&["--exam", "info-2023-test"], "?exam=info-2023-test"),
        (
            &["--subject", "Romanian Language & Literature"],
            "?subject=Romanian%20Language%20%26%20Literature",
        ),
        (
            &["--from", "2100-01-01T00:00:00Z"],
            "?from=2100-01-01T00:00:00Z",
        ),
    ];
    for (args, query) in cases {
        let mut argv = vec!["export"];
        argv.extend_from_slice(args);
        let cli = env.run(&argv);
        assert_eq!(code(&cli), 0, "{}", stderr(&cli));
        assert_eq!(
            cli.stdout,
            http_export(&env.store(), query).await,
            "{args:?}"
        );
    }
    let all = env.run(&["export"]);
    assert_eq!(stdout(&all).lines().count(), subs.len());

    let file = env.path("dataset.ndjson");
    assert_eq!(
        code(&env.run(&["export", "--out", file.to_str().unwrap()])),
        0
    );
    assert_eq!(fs::read(&file).unwrap(), all.stdout);
    assert_eq!(
        code(&env.run(&["export", "--out", "/nonexistent/dir/out.ndjson"])),
        2
    );
    assert_eq!(code(&env.run(&["export", "--from", "yesterday"])), 1);

    // Import into a fresh store with the same exams reproduces the stream.
    let other = Env::new();
    other.ingest_standard();
    let out = other.run(&["import", file.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(other.run(&["export"]).stdout, all.stdout);
}

#[test]
fn eval_run_resume_and_report() {
    let env = Env::new();
    env.ingest_standard();
    let subs = env.populate();
    let ids = env.write(
        "subs.txt",
        &format!("# submissions\n{}\n\n", subs.join("\n")),
    );
    let registry = env.write("providers.toml", REGISTRY);
    let reg = registry.to_str().unwrap();
    let ids = ids.to_str().unwrap();

    let first = env.run(&[
        "--registry",
        reg,
        "eval",
        "run",
        "--providers",
        "mock-a,mock-b",
        "--submissions",
        ids,
    ]);
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    let s1 = summary(&first);
    // Two open answers, two choice answers, two providers.
    assert_eq!(s1["n_pairs"], 8);
    assert_eq!(s1["n_ok"], 4);
    assert_eq!(s1["n_excluded"], 4);
    assert_eq!(s1["n_skipped"], 0);

    let again = env.run(&[
        "--registry",
        reg,
        "eval",
        "run",
        "--providers",
        "mock-a,mock-b",
        "--submissions",
        ids,
    ]);
    assert_eq!(code(&again), 0);
    let s2 = summary(&again);
    assert_eq!(s2["run_id"], s1["run_id"]);
    assert_eq!(s2["n_skipped"], 8);
    assert!(stderr(&again).contains("8 skipped"), "{}", stderr(&again));

    let unknown = env.run(&[
        "--registry",
        reg,
        "eval",
        "run",
        "--providers",
        "mock-a,ghost",
        "--submissions",
        ids,
    ]);
    assert_eq!(code(&unknown), 2);
    assert!(stderr(&unknown).contains("ghost"));
    let no_registry = env.run(&["eval", "run", "--providers", "mock-a", "--submissions", ids]);
    assert_eq!(code(&no_registry), 2);

    let run_id = s1["run_id"].as_str().unwrap();
    let p = env.platform();
    let open: Vec<&String> = subs
        .iter()
        .filter(|s| p.sessions.get_submission(s).unwrap().unwrap().question_id == "II.1")
        .collect();
    assert_eq!(open.len(), 2);
    let mut csv = String::from("submission_id,grader_id,score,breakdown,graded_at\n");
    for (s, score) in open.iter().zip([10, 4]) {
        csv.push_str(&format!("{s},prof,{score},,2025-06-01T10:00:00Z\n"));
    }
    let bad = env.write("bad.csv", &csv.replace(",4,", ",40,"));
    let out = env.run(&["grades", "ingest", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("row 3"), "{}", stderr(&out));
    let good = env.write("grades.csv", &csv);
    assert_eq!(
        code(&env.run(&["grades", "ingest", good.to_str().unwrap()])),
        0
    );

    let report = env.path("report.csv");
    let out = env.run(&[
        "eval",
        "report",
        "--run",
        run_id,
        "--format",
        "delimited",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let body = fs::read_to_string(&report).unwrap();
    assert_eq!(body.lines().count(), 3, "{body}");
    assert!(out.stdout.is_empty());

    let text = env.run(&["eval", "report", "--run", run_id]);
    assert_eq!(code(&text), 0);
    assert!(stdout(&text).contains("mock-b/full"));
    let json = env.run(&["eval", "report", "--run", run_id, "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v["run_id"], run_id);
    assert_eq!(v["policy"], "median");
    let json = env.run(&[
        "eval", "report", "--run", run_id, "--format", "json", "--policy", "single",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v["policy"], "single");

    assert_eq!(code(&env.run(&["eval", "report", "--run", "run-nope"])), 2);
    assert_eq!(
        code(&env.run(&["eval", "report", "--run", run_id, "--format", "xml"])),
        2
    );
    let list = env.run(&["eval", "list"]);
    assert_eq!(stdout(&list).lines().count(), 1);
}

#[test]
fn configuration_sources() {
    let env = Env::new();
    let alt = env.path("from-config");
    let config = env.write(
        "examlab.toml",
        &format!("store = {:?}\n", alt.to_str().unwrap()),
    );
    let exam = env.write("exam.json", &synth::small_cs_exam_json());

    let out = Command::new(env!("CARGO_BIN_EXE_examlab"))
        .env_remove("EXAMLAB_STORE")
        .args([
            "--config",
            config.to_str().unwrap(),
            "ingest",
            exam.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(alt.join("exams").is_dir());

    // The environment beats the config file.
    let env_store = env.path("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_examlab"))
        .env("EXAMLAB_STORE", &env_store)
        .args([
            "--config",
            config.to_str().unwrap(),
            "ingest",
            exam.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(env_store.join("exams").is_dir());

    let bad = env.write("bad.toml", "stor = 1\n");
    let out = Command::new(env!("CARGO_BIN_EXE_examlab"))
        .env_remove("EXAMLAB_STORE")
        .args(["--config", bad.to_str().unwrap(), "validate"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);

    assert_eq!(code(&env.run(&["no-such-command"])), 2);
    assert_eq!(code(&env.run(&["--help"])), 0);
    let broken = env.write("broken.toml", "[[providers]]\nprovider_id = \"x\"\n");
    assert_eq!(
        code(&env.run(&["--registry", broken.to_str().unwrap(), "validate"])),
        2
    );
}
