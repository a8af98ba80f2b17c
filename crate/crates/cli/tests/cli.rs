//! The `cidg` binary over toy data: file contracts, mode semantics and
//! error reporting.

mod support;

use std::collections::HashMap;

use cidg_core::corpus::{expand_examples, load_dialogues};
use cidg_core::pipeline::{load_history, load_report, FALLBACK_INSTRUCTION};
use cidg_core::tokenizer::EOS;
use cidg_core::training::{load_checkpoint, save_checkpoint};
use support::{ids, jsonl, tiny_config, Workspace, MODES};

fn example_ids(ws: &Workspace, file: &str) -> Vec<(String, u64)> {
    let dialogues = load_dialogues(&ws.file(file)).unwrap();
    expand_examples(&dialogues).into_iter().map(|e| (e.dialogue_id, e.turn_index as u64)).collect()
}

#[test]
fn missing_input_names_the_path_and_the_key() {
    let ws = Workspace::new(&tiny_config(), 4, 2, 4, 0);
    std::fs::remove_file(ws.file("triplets.jsonl")).unwrap();
    let out = ws.cidg(&["train-instgen"], None);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("triplets.jsonl") && err.contains("`triplets`"), "{err}");
}

#[test]
fn full_mode_without_labels_is_an_error() {
    let ws = Workspace::new(&tiny_config(), 4, 2, 4, 0);
    let out = ws.cidg(&["--mode", "generated-iterative", "train-dialog"], None);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("labeled.jsonl"));
}

#[test]
fn labeling_preserves_count_and_order_and_repeats_exactly() {
    let ws = Workspace::new(&tiny_config(), 7, 2, 8, 1);
    ws.ok(&["train-instgen"]);
    assert!(ws.file("instgen.ckpt").exists());
    assert!(ws.file("instgen.ckpt.history.json").exists());
    let stdout = ws.ok(&["label"]);
    assert!(stdout.contains("labeled 7 examples"), "{stdout}");
    let first = ws.read("labeled.jsonl");
    assert_eq!(ids(&jsonl(&first)), example_ids(&ws, "dialogues.jsonl"));
    ws.ok(&["label"]);
    assert_eq!(ws.read("labeled.jsonl"), first);
}

#[test]
fn empty_decodes_fall_back_and_are_flagged() {
    let ws = Workspace::new(&tiny_config(), 7, 2, 8, 1);
    ws.ok(&["train-instgen"]);
    // constant final hidden state e_0, and only EOS scores on dimension 0
    let path = ws.file("instgen.ckpt");
    let mut ckpt = load_checkpoint(&path).unwrap();
    let p = &mut ckpt.params;
    let (d, v) = (p.config.d_model, p.config.vocab_size);
    let ln = p.layout.final_ln;
    p.tensors[ln.gain].iter_mut().for_each(|x| *x = 0.0);
    p.tensors[ln.bias].iter_mut().enumerate().for_each(|(i, x)| *x = if i == 0 { 1.0 } else { 0.0 });
    let emb = p.layout.tok_emb;
    for row in 0..v {
        p.tensors[emb][row * d] = if row == EOS as usize { 50.0 } else { 0.0 };
    }
    save_checkpoint(&ckpt, &path).unwrap();

    let stdout = ws.ok(&["label"]);
    assert!(stdout.contains("(7 fallbacks)"), "{stdout}");
    let records = jsonl(&ws.read("labeled.jsonl"));
    assert_eq!(records.len(), 7);
    for r in &records {
        assert_eq!(r["instruction"], FALLBACK_INSTRUCTION);
        assert_eq!(r["fallback"], true);
    }
}

#[test]
fn every_mode_consumes_one_pair_per_example_per_epoch() {
    let ws = Workspace::new(&tiny_config(), 9, 2, 6, 2);
    ws.train_all();
    let epochs = tiny_config().epochs;
    for (ckpt, response_only) in [("dialog.ckpt", false), ("dialog-none.ckpt", true)] {
        let h = load_history(&ws.file(&format!("{ckpt}.history.json"))).unwrap();
        assert_eq!(h.loss.len(), epochs);
        assert_eq!(h.stats.pairs_per_epoch, vec![9; epochs], "{ckpt}");
        assert_eq!(h.stats.case_counts.iter().sum::<usize>(), 9 * epochs);
        if response_only {
            assert_eq!(h.stats.case_counts, [0, 0, 0, 9 * epochs]);
        }
    }
    let h = load_history(&ws.file("instgen.ckpt.history.json")).unwrap();
    assert_eq!(h.stats.pairs_per_epoch, vec![6; epochs]);
    assert_eq!(h.stats.instgen_pairs, 6 * epochs);
}

#[test]
fn modes_share_one_id_set_and_fill_instructions_by_rule() {
    let ws = Workspace::new(&tiny_config(), 8, 8, 8, 3);
    ws.train_all();
    let expected = example_ids(&ws, "test_dialogues.jsonl");
    for mode in MODES {
        let table = ws.generate_and_eval(mode);
        assert!(table.contains("BLEU-1") && table.contains(mode), "{table}");
        let records = jsonl(&ws.read(&format!("generations-{mode}.jsonl")));
        assert_eq!(ids(&records), expected, "{mode}");
        for r in &records {
            assert_eq!(r["instruction"].is_null(), mode == "none", "{mode}: {r}");
        }
        let report: serde_json::Value = serde_json::from_slice(&ws.read(&format!("report-{mode}.json"))).unwrap();
        assert_eq!(report["counts"]["hypotheses"], 8);
    }

    let fixed = tiny_config().fixed_instruction_set;
    assert_eq!(fixed.len(), 4);
    let records = jsonl(&ws.read("generations-fixed.jsonl"));
    let mut uses: HashMap<&str, usize> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        let ins = r["instruction"].as_str().unwrap();
        assert_eq!(ins, fixed[i % 4]);
        *uses.entry(ins).or_default() += 1;
    }
    assert!(uses.values().all(|&n| n == 2), "{uses:?}");
}

fn write_generations(ws: &Workspace, records: &[serde_json::Value]) {
    let text: String = records.iter().map(|r| format!("{r}\n")).collect();
    std::fs::write(ws.file("generations.jsonl"), text).unwrap();
}

#[test]
fn eval_scores_gold_as_perfect_and_ignores_record_order() {
    let ws = Workspace::new(&tiny_config(), 2, 6, 2, 4);
    let dialogues = load_dialogues(&ws.file("test_dialogues.jsonl")).unwrap();
    let mut gold: Vec<serde_json::Value> = expand_examples(&dialogues)
        .into_iter()
        .map(|e| {
            serde_json::json!({
                "dialogue_id": e.dialogue_id, "turn_index": e.turn_index,
                "instruction": null, "response": e.response,
            })
        })
        .collect();
    write_generations(&ws, &gold);
    ws.ok(&["eval"]);
    let report = load_report(&ws.file("report.json")).unwrap();
    assert_eq!((report.bleu1, report.bleu2), (1.0, 1.0));

    // a different hypothesis set, then the same records in another order
    for (i, r) in gold.iter_mut().enumerate() {
        r["response"] = format!("answer {} of the day", i % 3).into();
    }
    write_generations(&ws, &gold);
    ws.ok(&["eval"]);
    let forward = ws.read("report.json");
    gold.reverse();
    gold.swap(0, 2);
    write_generations(&ws, &gold);
    ws.ok(&["eval"]);
    assert_eq!(ws.read("report.json"), forward);
}

#[test]
fn eval_rejects_unknown_and_duplicate_records() {
    let ws = Workspace::new(&tiny_config(), 2, 3, 2, 4);
    let record =
        |id: &str| serde_json::json!({"dialogue_id": id, "turn_index": 1, "instruction": null, "response": "x"});
    write_generations(&ws, &[record("nope")]);
    let out = ws.cidg(&["eval"], None);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));

    let first = &example_ids(&ws, "test_dialogues.jsonl")[0];
    write_generations(&ws, &[record(&first.0), record(&first.0)]);
    assert!(!ws.cidg(&["eval"], None).status.success());
}

#[test]
fn flags_override_the_config_file() {
    let ws = Workspace::new(&tiny_config(), 2, 2, 2, 0);
    let text = ws.ok(&["--seed", "17", "--mode", "oracle", "config"]);
    let cfg = cidg_core::pipeline::RunConfig::from_toml(&text).unwrap();
    assert_eq!(cfg.seed, 17);
    assert_eq!(cfg.instruction_mode, cidg_core::pipeline::InstructionMode::Oracle);
    assert_eq!(cfg.d_model, 16);
    assert_eq!(cfg.data_dir.as_deref(), Some(ws.path()));
}

#[test]
fn chat_prints_an_instruction_and_a_response_per_turn() {
    let ws = Workspace::new(&tiny_config(), 6, 2, 6, 5);
    ws.train_all();
    let out = ws.cidg(&["chat"], Some("hello there\n/persona i like ski\nhow are you\n/quit\nignored\n"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("chatting with"));
    assert!(lines[1].starts_with("instruction: ") && lines[2].starts_with("response: "));
    assert_eq!(lines[3], "(persona: i like ski)");
    assert!(lines[4].starts_with("instruction: ") && lines[5].starts_with("response: "));
    assert_eq!(lines[6..], ["bye"]);
}
