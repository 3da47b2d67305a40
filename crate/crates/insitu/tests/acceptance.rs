//! Acceptance criteria P1-P8. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any fails.

#[path = "common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use insitu_core::delivery::{apply_sim, compile_plan, revert_sim};
use insitu_core::dom_model::{extract_interactables, parse_snapshot, snapshot_equal, DomSnapshot, UiElement};
use insitu_core::engine::Engine;
use insitu_core::evalkit::{run_eval, EvalConfig, EvalRecord};
use insitu_core::grounding::{cache_element_embeddings, ground_case, GroundingConfig};
use insitu_core::handbook::{
    generate_handbook, validate_case, AssistanceCase, CaseOrigin, ChallengeCategory, HandbookIndex, SubtypeId, UiTarget,
};
use insitu_core::knowledge::{build_knowledge, interface_id, InterfaceKnowledge};
use insitu_core::providers::{
    quantize, Embedder, GenerationRequest, Generator, MockEmbedder, MockGenerator, ProviderError, Providers, TemplateId,
    Vector,
};
use insitu_core::recommender::{recommend, Method, RecommendationPath, RecommenderConfig};
use insitu_core::testkit::{random_case, random_handbook, random_rationale, random_snapshot};
use parking_lot::RwLock;
use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, u64, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    }};
}

fn snapshot(name: &str) -> DomSnapshot {
    let path = common::fixtures().join("snapshots").join(format!("{name}.json"));
    parse_snapshot(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn read_json(rel: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(common::fixtures().join(rel)).unwrap()).unwrap()
}

fn p1_subtype_totality() -> Outcome {
    let providers = Providers::mock();
    let snap = snapshot("voyager");
    let elements = extract_interactables(&snap);
    let table = cache_element_embeddings(&elements, &providers).map_err(|e| e.to_string())?;
    let mut passed = 0;
    for subtype in SubtypeId::ALL {
        let g = read_json(&format!("golden/{subtype}.json"));
        let case = validate_case(&g["case"], &elements)
            .map_err(|e| format!("{subtype}: {e}"))?
            .into_case(format!("golden/{subtype}"), CaseOrigin::HandbookGenerated);
        let grounded = ground_case(&case, &table, &GroundingConfig::default(), &providers).map_err(|e| format!("{subtype}: {e}"))?;
        let plan = compile_plan(&case, &grounded, &snap, "accept-1").map_err(|e| format!("{subtype}: {e}"))?;
        let kinds: Vec<&str> = plan.ops.iter().map(|o| o.body.kind()).collect();
        ensure!(json!(kinds) == g["expect"]["op_kinds"], "{subtype}: ops {kinds:?}");
        let (applied, record) = apply_sim(&snap, &plan).map_err(|e| format!("{subtype}: {e}"))?;
        let back = revert_sim(&applied, &record);
        ensure!(!back.tampered && snapshot_equal(&snap, &back.snapshot, false), "{subtype}: revert differs");
        passed += 1;
    }
    ensure!(passed == 9, "{passed} of 9 subtypes");
    Ok("9/9 subtypes compile, apply and revert".into())
}

fn p2_reversibility() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e2);
    let mut pairs = 0;
    let mut draws = 0;
    while pairs < 200 {
        draws += 1;
        ensure!(draws < 2000, "only {pairs} valid pairs in {draws} draws");
        let size = rng.gen_range(10..150);
        let snap = random_snapshot(&mut rng, size);
        let subtype = *SubtypeId::ALL.choose(&mut rng).unwrap();
        let Some((case, grounded)) = random_case(&mut rng, &snap, subtype) else { continue };
        let Ok(plan) = compile_plan(&case, &grounded, &snap, &format!("p-{pairs}")) else { continue };
        let (applied, record) = apply_sim(&snap, &plan).map_err(|e| format!("pair {pairs} ({subtype}): {e}"))?;
        let before: BTreeSet<u32> = snap.document_order().into_iter().collect();
        let after: BTreeSet<u32> = applied.document_order().into_iter().collect();
        ensure!(before.is_subset(&after), "pair {pairs} ({subtype}) detached a node");
        let back = revert_sim(&applied, &record);
        ensure!(snapshot_equal(&snap, &back.snapshot, false), "pair {pairs} ({subtype}) did not revert");
        pairs += 1;
    }
    Ok(format!("200/200 pairs revert to identity ({draws} draws)"))
}

fn brute_force(index: &HandbookIndex, query: &[f64], k: usize) -> Vec<(String, f64)> {
    let qn = query.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut rows: Vec<(f64, i64, usize)> = index
        .vectors()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let dot: f64 = v.values().iter().zip(query).map(|(a, b)| a * b).sum();
            let vn = v.values().iter().map(|x| x * x).sum::<f64>().sqrt();
            (quantize(dot / (vn * qn)), index.cases()[i].feedback, i)
        })
        .collect();
    // Insertion sort on the full key; deliberately unlike the index's sort.
    for i in 1..rows.len() {
        let mut j = i;
        while j > 0 {
            let (a, b) = (rows[j], rows[j - 1]);
            let before = a.0 > b.0 || (a.0 == b.0 && (a.1 > b.1 || (a.1 == b.1 && a.2 < b.2)));
            if !before {
                break;
            }
            rows.swap(j, j - 1);
            j -= 1;
        }
    }
    rows.into_iter().take(k).map(|(s, _, i)| (index.cases()[i].case_id.clone(), s)).collect()
}

fn p3_retrieval_oracle() -> Outcome {
    let providers = Providers::mock();
    let mut rng = ChaCha8Rng::seed_from_u64(0x3e7);
    let mut draws = 0;
    for round in 0..25 {
        let n = rng.gen_range(1..=200);
        let index = random_handbook(&mut rng, "accept", n, &providers).map_err(|e| e.to_string())?;
        for _ in 0..20 {
            let query = if rng.gen_bool(0.4) {
                index.cases().choose(&mut rng).unwrap().rationale.clone()
            } else {
                random_rationale(&mut rng)
            };
            let k = rng.gen_range(1..=12);
            let got: Vec<(String, f64)> = index
                .retrieve(&query, k, &providers)
                .map_err(|e| e.to_string())?
                .into_iter()
                .map(|s| (s.case.case_id, s.score))
                .collect();
            let q = providers.embed(&query).map_err(|e| e.to_string())?;
            ensure!(got == brute_force(&index, q.values(), k), "round {round}: mismatch for {query:?}");
            draws += 1;
        }
    }
    Ok(format!("{draws}/500 draws equal the brute-force ranking"))
}

/// Places "probe <s>" at cosine `s` from the anchor rationale; every other
/// text lands in a subspace orthogonal to both.
struct ProbeEmbedder(MockEmbedder);

const ANCHOR: &str = "anchor rationale";

impl Embedder for ProbeEmbedder {
    fn embed(&self, text: &str) -> Result<Vector, ProviderError> {
        let mut v = vec![0.0; 2];
        if text == ANCHOR {
            v[0] = 1.0;
        } else if let Some(s) = text.strip_prefix("probe ").and_then(|s| s.parse::<f64>().ok()) {
            v[0] = s;
            v[1] = (1.0 - s * s).sqrt();
        } else {
            v.extend_from_slice(self.0.embed(text)?.values());
            return Vector::normalized(v);
        }
        v.extend(std::iter::repeat_n(0.0, insitu_core::providers::MOCK_DIMENSION));
        Vector::normalized(v)
    }
}

fn anchor_case(elements: &[UiElement]) -> AssistanceCase {
    AssistanceCase {
        case_id: "probe/h0000".into(),
        assistance: "Highlight the undo link.".into(),
        rationale: ANCHOR.into(),
        subtype: SubtypeId::MutateStyle,
        targets: vec![UiTarget::new(elements[1].target_form())],
        configuration: json!({"properties": {"outline": "2px solid red"}}),
        category: Some(ChallengeCategory::Where),
        feedback: 0,
        origin: CaseOrigin::HandbookGenerated,
    }
}

fn p4_routing_law() -> Outcome {
    let snap = snapshot("voyager");
    let elements = extract_interactables(&snap);
    let base = Providers::mock().with_embedder(Arc::new(ProbeEmbedder(MockEmbedder::new())));
    let knowledge: InterfaceKnowledge = build_knowledge(&snap, &elements, &base).map_err(|e| e.to_string())?;
    let cfg = RecommenderConfig::default();
    let sweep = [-0.4, 0.0, 0.25, 0.49, 0.499999, 0.5, 0.500001, 0.51, 0.75, 0.99, 1.0];
    for s in sweep {
        let providers = base.with_new_counters();
        let index = RwLock::new(HandbookIndex::build("probe", vec![anchor_case(&elements)], &providers).map_err(|e| e.to_string())?);
        let r = recommend(&format!("probe {s}"), &elements, &index, &knowledge, &cfg, &providers).map_err(|e| e.to_string())?;
        let top = r.top_score.ok_or("no retrieval")?;
        ensure!((top - s).abs() < 1e-9, "probe {s} scored {top}");
        ensure!(s != 0.5 || top == 0.5, "boundary probe scored {top}, not exactly 0.5");
        let generated = providers.calls().generate > 0;
        ensure!(generated == (top <= 0.5), "score {top}: generation counter {}", providers.calls().generate);
        ensure!((r.path == RecommendationPath::Retrieved) == !generated, "score {top}: path {:?}", r.path);
    }
    Ok(format!("{} scores swept, boundary 0.5 generates", sweep.len()))
}

/// "Users who X can Y" becomes "I X".
fn first_person(rationale: &str) -> Option<String> {
    let rest = rationale.strip_prefix("Users who ")?;
    let need = rest.split(" can ").next()?;
    Some(format!("I {need}"))
}

fn p5_latency() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = common::engine_config(dir.path(), "mock");
    cfg.persist = false;
    cfg.providers.mock.generation_latency_ms = 4000;
    cfg.providers.mock.embedding_latency_ms = 5;
    let engine = Engine::new(cfg).map_err(|e| e.to_string())?;
    let snap = snapshot("voyager");
    engine.init_interface_blocking(&snap).map_err(|e| e.to_string())?;
    let id = interface_id(&snap.url).map_err(|e| e.to_string())?;
    let handbook = HandbookIndex::from_json(&engine.export_handbook(&id).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;

    let mut seen = BTreeSet::new();
    let mut records = Vec::new();
    let cases = handbook.cases();
    for i in 0..cases.len() {
        let case = &cases[(i * 7) % cases.len()];
        let Some(q) = first_person(&case.rationale) else { continue };
        if seen.insert(q.clone()) {
            records.push(EvalRecord {
                record_id: format!("p5-{:02}", records.len()),
                interface_id: id.clone(),
                category: case.category.unwrap_or(ChallengeCategory::How),
                challenge: q,
                snapshot_path: common::fixtures().join("snapshots/voyager.json"),
                reference_assistance: case.assistance.clone(),
            });
        }
        if records.len() == 50 {
            break;
        }
    }
    ensure!(records.len() == 50, "only {} distinct queries", records.len());

    // Requests are independent, so the slow baseline runs them side by side;
    // each request still pays the full generation latency.
    let generate = run_eval(&engine, &records, &EvalConfig { method: Method::GenerateOnly, parallelism: 25, ..EvalConfig::default() })
        .map_err(|e| e.to_string())?;
    let hybrid = run_eval(&engine, &records, &EvalConfig { method: Method::Hybrid, ..EvalConfig::default() }).map_err(|e| e.to_string())?;
    let fallback = hybrid.fallback_rate.unwrap_or(1.0);
    let ratio = generate.latency_ms.mean / hybrid.latency_ms.mean;
    ensure!(ratio >= 10.0, "hybrid {:.1} ms vs generate {:.1} ms", hybrid.latency_ms.mean, generate.latency_ms.mean);
    ensure!(fallback <= 0.05, "fallback rate {fallback}");
    Ok(format!(
        "hybrid {:.1} ms, generate_only {:.1} ms ({ratio:.0}x), fallback {:.0}%",
        hybrid.latency_ms.mean,
        generate.latency_ms.mean,
        fallback * 100.0
    ))
}

fn p6_grounding() -> Outcome {
    let fx = read_json("grounding/voyager_targets.json");
    let snap = snapshot("voyager");
    let elements = extract_interactables(&snap);
    ensure!(elements.len() == 50, "{} elements", elements.len());
    let providers = Providers::mock();
    let table = cache_element_embeddings(&elements, &providers).map_err(|e| e.to_string())?;
    let mut exact = 0;
    let mut para = 0;
    for (group, key, counter) in [("exact", "element_index", &mut exact), ("paraphrase", "oracle_index", &mut para)] {
        for t in fx[group].as_array().unwrap() {
            let desc = t["description"].as_str().unwrap();
            let mut case = anchor_case(&elements);
            case.targets = vec![UiTarget::new(desc)];
            let g = ground_case(&case, &table, &GroundingConfig::default(), &providers).map_err(|e| format!("{desc}: {e}"))?;
            ensure!(g[0].element_index as u64 == t[key].as_u64().unwrap(), "{desc} -> #{}", g[0].element_index);
            *counter += 1;
        }
    }
    ensure!((exact, para) == (20, 10), "fixture has {exact} exact and {para} paraphrase targets");
    ensure!(providers.calls().generate == 0, "grounding made generation calls");
    Ok("20/20 exact, 10/10 paraphrase, 0 generation calls".into())
}

struct Corrupting {
    inner: MockGenerator,
    broken: Vec<usize>,
}

impl Generator for Corrupting {
    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        let text = self.inner.generate(request)?;
        if request.template_id != TemplateId::HandbookGeneration {
            return Ok(text);
        }
        let mut items: Vec<Value> = serde_json::from_str(&text).map_err(|e| ProviderError::MalformedResponse(e.to_string()))?;
        for (k, &i) in self.broken.iter().enumerate() {
            match k % 3 {
                0 => items[i]["targets"] = json!([{"uiDescription": "[button] Launch rocket"}]),
                1 => {
                    items[i].as_object_mut().unwrap().remove("assistance");
                }
                _ => items[i]["domSubtype"] = json!("mutate.teleport"),
            }
        }
        Ok(Value::Array(items).to_string())
    }
}

fn p7_lifecycle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7);
    let mut broken: Vec<usize> = (0..120).choose_multiple(&mut rng, 3);
    broken.sort();
    let providers = Providers::mock().with_generator(Arc::new(Corrupting {
        inner: MockGenerator::synthesizing(),
        broken: broken.clone(),
    }));
    let snap = snapshot("voyager");
    let elements = extract_interactables(&snap);
    let knowledge = build_knowledge(&snap, &elements, &providers).map_err(|e| e.to_string())?;
    let generated = generate_handbook(&knowledge, &elements, 120, &providers).map_err(|e| e.to_string())?;
    ensure!(generated.cases.len() == 117, "{} cases stored", generated.cases.len());
    let rejected: Vec<usize> = generated.rejections.iter().map(|r| r.index).collect();
    ensure!(rejected == broken, "rejected {rejected:?}, broke {broken:?}");

    let index = RwLock::new(HandbookIndex::build(&knowledge.interface_id, generated.cases, &providers).map_err(|e| e.to_string())?);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    index.read().save(&a).map_err(|e| e.to_string())?;
    HandbookIndex::load(&a).map_err(|e| e.to_string())?.save(&b).map_err(|e| e.to_string())?;
    ensure!(std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap(), "round trip changed bytes");

    let challenge = "my exported png looks blurry on a projector";
    let cfg = RecommenderConfig::default();
    let first = recommend(challenge, &elements, &index, &knowledge, &cfg, &providers).map_err(|e| e.to_string())?;
    let id = first.persisted_case_id.ok_or("fallback case was not stored")?;
    let again = recommend(challenge, &elements, &index, &knowledge, &cfg, &providers).map_err(|e| e.to_string())?;
    ensure!(again.path == RecommendationPath::Retrieved, "second request took {:?}", again.path);
    ensure!(again.candidates[0].case.case_id == id, "top is {}", again.candidates[0].case.case_id);
    let reasons: Vec<&str> = generated.rejections.iter().map(|r| r.reason.kind()).collect();
    Ok(format!("117/120 stored (rejected {broken:?}: {reasons:?}), byte-identical reload, fallback {id} retrieved"))
}

fn run_cli_eval(config: &Path, method: &str, out: &Path) -> Result<Value, String> {
    let dataset = common::fixtures().join("eval/dataset.jsonl");
    let status = Command::new(env!("CARGO_BIN_EXE_insitu"))
        .args(["--config", config.to_str().unwrap(), "eval", "--dataset", dataset.to_str().unwrap()])
        .args(["--method", method, "--seed", "42", "--judge", "on", "--out", out.to_str().unwrap()])
        .env_remove("INSITU_CONFIG")
        .env_remove("INSITU_DATA_DIR")
        .env("RUST_LOG", "error")
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(status.status.success(), "{method}: {}", String::from_utf8_lossy(&status.stderr));
    serde_json::from_str(&std::fs::read_to_string(out).map_err(|e| e.to_string())?).map_err(|e| e.to_string())
}

fn p8_eval() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("insitu.toml");
    std::fs::write(
        &config,
        format!("[providers.mock]\nfixtures_dir = {:?}\n", common::fixtures().join("mock_judge").display().to_string()),
    )
    .map_err(|e| e.to_string())?;
    let mut summary = Vec::new();
    for method in ["generate", "handbook", "hybrid"] {
        let r = run_cli_eval(&config, method, &dir.path().join(format!("{method}.json")))?;
        ensure!(r["n_records"] == 24, "{method}: n_records {}", r["n_records"]);
        let success = r["success_rate"].as_f64().ok_or("no success_rate")?;
        ensure!((0.0..=1.0).contains(&success), "{method}: success_rate {success}");
        for p in ["mean", "p50", "p95"] {
            ensure!(r["latency_ms"][p].is_number(), "{method}: latency {p} missing");
        }
        ensure!(r.get("fallback_rate").is_some() == (method == "hybrid"), "{method}: fallback_rate presence");
        let res = &r["resolution"];
        let scores: Vec<f64> = res["scores"].as_object().ok_or("no resolution")?.values().filter_map(Value::as_f64).collect();
        ensure!(scores.len() == 24, "{method}: {} scores", scores.len());
        ensure!(scores.iter().all(|&s| s == 10.0), "{method}: unclamped score");
        ensure!(res["clamped"] == 24, "{method}: clamped {}", res["clamped"]);

        let calls = &r["provider_calls"];
        let records = r["records"].as_array().unwrap();
        match method {
            "generate" => ensure!(calls["retrieve"] == 0, "generate_only retrieved"),
            "handbook" => ensure!(calls["generate"] == 0, "handbook_only generated"),
            _ => {
                for rec in records {
                    let top = rec["top_score"].as_f64().ok_or("hybrid record without top_score")?;
                    let retrieved = rec["path"] == "retrieved";
                    ensure!(retrieved == (top > 0.5), "{}: path {} at score {top}", rec["record_id"], rec["path"]);
                }
                let fallback = r["fallback_rate"].as_f64().unwrap();
                ensure!((calls["generate"].as_u64().unwrap() > 0) == (fallback > 0.0), "hybrid generation counter");
            }
        }
        summary.push(format!("{method} success {success:.2}"));
    }
    Ok(summary.join(", ") + "; judge scores clamped to 10")
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("P1", "subtype totality", 5, p1_subtype_totality),
        ("P2", "reversibility", 30, p2_reversibility),
        ("P3", "retrieval oracle equivalence", 60, p3_retrieval_oracle),
        ("P4", "routing law", 60, p4_routing_law),
        ("P5", "latency architecture", 300, p5_latency),
        ("P6", "grounding accuracy", 60, p6_grounding),
        ("P7", "handbook lifecycle", 60, p7_lifecycle),
        ("P8", "eval methodology", 300, p8_eval),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, budget, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > Duration::from_secs(budget) => Err(format!("{detail}; over the {budget} s budget")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("{id} {name}: PASS ({:.2} s) {detail}", elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("{id} {name}: FAIL ({:.2} s) {why}", elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
