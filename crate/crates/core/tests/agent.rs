mod common;

use codeloop_core::agent::NUDGE_TEXT;
use codeloop_core::session::{
    deserialize_trace, serialize_trace, ContentPart, ExecStatus, RestartPolicy, Role, SessionConfig, SessionMode,
    Termination,
};
use codeloop_core::{Agent, ScriptedClient, SupervisorConfig};
use common::*;

#[test]
fn two_code_turns_then_answer_gives_n_plus_one_turns() {
    let client = ScriptedClient::new(two_code_turns_then_answer());
    let res = agent(&[]).run_session("s1", "What is the pixel area?", &[demo_image()], &client);
    let t = &res.trace;
    assert_eq!(t.termination, Termination::Answered);
    assert_eq!(res.answer.as_deref(), Some("48"));
    assert_eq!(t.turns.len(), 3);
    assert_eq!(res.n_code_blocks, 2);
    assert_eq!(t.turns.iter().filter(|t| t.clue_message.is_some()).count(), 2);

    let first = &t.turns[0].exec_results[0];
    assert_eq!(first.status, ExecStatus::Ok);
    assert_eq!(first.stdout, "8 6\n");
    let second = &t.turns[1].exec_results[0];
    assert_eq!(second.stdout, "48\n");
    assert_eq!(second.images.len(), 1);

    let clue = t.turns[1].clue_message.as_ref().unwrap();
    assert_eq!(clue.role, Role::User);
    assert!(matches!(&clue.parts[0], ContentPart::Text { text } if text.starts_with("<interpreter>") && text.contains("48")));
    assert!(matches!(clue.parts[1], ContentPart::Image { .. }));

    // system, user images, then (assistant, clue) twice, then the answer
    let roles: Vec<Role> = res.context.iter().map(|m| m.role).collect();
    assert_eq!(
        roles,
        [Role::System, Role::User, Role::Assistant, Role::User, Role::Assistant, Role::User, Role::Assistant]
    );
    assert!(res.context[0].joined_text().contains("Image Width: 8; Image Height: 6"));
    assert!(res.context[0].joined_text().contains("What is the pixel area?"));
    assert_eq!(res.context[1].images().count(), 1);
    t.validate().unwrap();
    assert_eq!(client.calls(), 3);
}

#[test]
fn trace_round_trips_and_replays() {
    let res = agent(&[]).run_session("s", "q", &[demo_image()], &ScriptedClient::new(two_code_turns_then_answer()));
    let doc = serialize_trace(&res.trace);
    let back = deserialize_trace(&doc).unwrap();
    assert_eq!(back, res.trace);
    let replay = agent(&[]).run_session("s", "q", &[demo_image()], &ScriptedClient::from_trace(&back));
    assert_eq!(
        serialize_trace(&replay.trace.without_timing()),
        serialize_trace(&res.trace.without_timing())
    );
}

#[test]
fn one_nudge_then_plain_turns() {
    let client = ScriptedClient::new(["I think it is red.", "Still thinking.", "<answer>\\boxed{red}</answer>"]);
    let res = agent(&[]).run_session("n", "colour?", &[demo_image()], &client);
    assert_eq!(res.trace.termination, Termination::Answered);
    assert_eq!(res.trace.turns.len(), 3);
    let nudges = res.context.iter().filter(|m| m.joined_text() == NUDGE_TEXT).count();
    assert_eq!(nudges, 1);
    assert!(res.trace.turns[0].warnings[0].contains("nudge"));
    assert!(!res.trace.turns[1].warnings.is_empty());
}

#[test]
fn turn_limit() {
    let config = SessionConfig {
        max_turns: 2,
        exec_timeout: 5.0,
        ..SessionConfig::default()
    };
    let agent = Agent::new(config, mock_kernel(&[]));
    let client = ScriptedClient::new(two_code_turns_then_answer());
    let res = agent.run_session("m", "q", &[demo_image()], &client);
    assert_eq!(res.trace.termination, Termination::MaxTurnsExceeded);
    assert_eq!(res.answer, None);
    assert_eq!(res.trace.turns.len(), 2);
    res.trace.validate().unwrap();
}

#[test]
fn exhausted_script_is_a_fault() {
    let client = ScriptedClient::new([code_turn("print(1)\n")]);
    let res = agent(&[]).run_session("f", "q", &[demo_image()], &client);
    assert_eq!(res.trace.termination, Termination::Fault);
    assert!(res.faults[0].contains("exhausted"));
    res.trace.validate().unwrap();
}

#[test]
fn crash_is_reported_and_session_continues() {
    let client = ScriptedClient::new([
        code_turn("x = 5\n"),
        code_turn("import os\nos._exit(4)\n"),
        code_turn("print(x)\n"),
        "<answer>\\boxed{5}</answer>".to_string(),
    ]);
    let res = agent(&[]).run_session("c", "q", &[demo_image()], &client);
    assert_eq!(res.trace.termination, Termination::Answered);
    let crash = &res.trace.turns[1].exec_results[0];
    assert_eq!(crash.status, ExecStatus::KernelCrashed);
    let clue = res.trace.turns[1].clue_message.as_ref().unwrap().joined_text();
    assert!(clue.contains("restarted"), "{clue}");
    assert!(res.trace.turns[2].exec_results[0].error.contains("NameError"));
    assert!(res.faults.is_empty());
}

#[test]
fn fail_session_policy_stops_on_crash() {
    let config = SessionConfig {
        kernel_restart_policy: RestartPolicy::FailSession,
        exec_timeout: 5.0,
        ..SessionConfig::default()
    };
    let agent = Agent::new(config, mock_kernel(&[]));
    let client = ScriptedClient::new([
        "<code>\nimport os\nos._exit(1)\n</code>\n<code>\nprint(2)\n</code>".to_string(),
        "<answer>\\boxed{x}</answer>".to_string(),
    ]);
    let res = agent.run_session("p", "q", &[demo_image()], &client);
    assert_eq!(res.trace.termination, Termination::Fault);
    let results = &res.trace.turns[0].exec_results;
    assert_eq!(results.len(), 2);
    assert_eq!(results[0].status, ExecStatus::KernelCrashed);
    assert!(results[1].error.starts_with("not executed"));
    res.trace.validate().unwrap();
}

#[test]
fn unstartable_kernel_is_a_fault() {
    let agent = Agent::new(SessionConfig::default(), SupervisorConfig::new(["/nonexistent/kernel"]));
    let client = ScriptedClient::new([code_turn("print(1)\n"), "<answer>\\boxed{1}</answer>".to_string()]);
    let res = agent.run_session("u", "q", &[demo_image()], &client);
    assert_eq!(res.trace.termination, Termination::Fault);
    assert_eq!(res.trace.turns[0].exec_results[0].status, ExecStatus::KernelCrashed);
    assert!(res.faults[0].contains("2 attempts"));
}

#[test]
fn answer_without_code_never_starts_a_kernel() {
    let agent = Agent::new(SessionConfig::default(), SupervisorConfig::new(["/nonexistent/kernel"]));
    let res = agent.run_session("a", "2+2?", &[], &ScriptedClient::new(["<answer>\\boxed{4}</answer>"]));
    assert_eq!(res.answer.as_deref(), Some("4"));
    assert_eq!(res.context[1].joined_text(), "2+2?");
}

#[test]
fn multiple_blocks_in_one_turn_share_state() {
    let client = ScriptedClient::new([
        "<code>\na = 2\n</code> and then <code>\nprint(a * 21)\n</code>".to_string(),
        "<answer>\\boxed{42}</answer>".to_string(),
    ]);
    let res = agent(&[]).run_session("b", "q", &[demo_image()], &client);
    let turn = &res.trace.turns[0];
    assert_eq!(turn.code_blocks.len(), 2);
    assert_eq!(turn.exec_results[1].stdout, "42\n");
    let clue = turn.clue_message.as_ref().unwrap();
    assert_eq!(clue.parts.len(), 2);
}

#[test]
fn cot_baseline() {
    let a = agent(&[]);
    let res = a.run_cot("c", "Which?", &[demo_image()], &ScriptedClient::new(["Reasoning... \\boxed{B}"]));
    assert_eq!(res.trace.mode, SessionMode::Cot);
    assert_eq!(res.answer.as_deref(), Some("B"));
    assert!(res.context[0].joined_text().ends_with("Which?"));
    let res = a.run_cot("c", "Which?", &[demo_image()], &ScriptedClient::new(["No idea."]));
    assert_eq!(res.trace.termination, Termination::Unanswered);
}
