//! End-to-end pipeline behavior over scripted mock backends.

mod common;

use std::sync::Arc;

use argus_core::audit::{read_audit, write_audit};
use argus_core::clock::{FixedClock, StepClock, SystemClock};
use argus_core::gateway::GatewayError;
use argus_core::memory::{ConversationMemory, Role};
use argus_core::orchestrator::{
    expected_turn_count, ContextPolicy, InquirerMode, PhaseKind, PipelineError,
};
use argus_core::parsing::extract_question;

use common::*;

/// Independent turn-count oracle: walk the pipeline structure and count
/// what each phase appends.
fn brute_force_turn_walk(iterations: u32, suite_n: usize) -> Vec<Role> {
    let mut roles = vec![Role::Captioner, Role::Drafter];
    for _ in 0..iterations {
        roles.push(Role::Inquirer);
        for _ in 0..suite_n {
            roles.push(Role::VisionSuite);
        }
        roles.push(Role::Revisor);
    }
    roles.push(Role::Spokesman);
    roles
}

#[test]
fn full_task_matches_transcript_walk() {
    let world = WorldBuilder::new(2, 3).build(Arc::new(StepClock::starting_at_default(10)));
    let result = world.pipeline.run_task(world.task("How many runways?")).unwrap();

    let expected_roles = brute_force_turn_walk(3, 2);
    assert_eq!(expected_roles.len(), 15);
    assert_eq!(result.memory.len(), expected_turn_count(3, 2));
    let actual_roles: Vec<Role> = result.memory.turns().iter().map(|t| t.role).collect();
    assert_eq!(actual_roles, expected_roles);

    assert_eq!(result.final_answer, FINAL_ANSWER);
    assert_eq!(result.iterations_run, 3);

    // Iteration labels: 0 for captioner/drafter, 1..K for loop roles, K+1
    // for the spokesman.
    let turns = result.memory.turns();
    assert_eq!(turns[0].iteration, 0);
    assert_eq!(turns[1].iteration, 0);
    assert_eq!(turns[2].iteration, 1);
    assert_eq!(turns[13].iteration, 3);
    assert_eq!(turns[14].iteration, 4);
}

#[test]
fn one_iteration_single_backend_walk() {
    let world = WorldBuilder::new(1, 1).build(Arc::new(StepClock::starting_at_default(10)));
    let result = world.pipeline.run_task(world.task("How many runways?")).unwrap();
    let expected_roles = brute_force_turn_walk(1, 1);
    assert_eq!(result.memory.len(), expected_roles.len());
    assert_eq!(result.memory.len(), expected_turn_count(1, 1));
    let actual_roles: Vec<Role> = result.memory.turns().iter().map(|t| t.role).collect();
    assert_eq!(actual_roles, expected_roles);
}

#[test]
fn two_runs_identical_transcripts() {
    let run = || {
        let world = WorldBuilder::new(2, 3).build(Arc::new(FixedClock::default_test_time()));
        let result = world.pipeline.run_task(world.task("How many runways?")).unwrap();
        result
            .memory
            .turns()
            .iter()
            .map(|t| {
                (
                    t.role,
                    t.backend_id.clone(),
                    t.prompt_rendered.clone(),
                    t.response_raw.clone(),
                )
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn question_propagation_verbatim() {
    let world = WorldBuilder::new(2, 3)
        .call_logging()
        .build(Arc::new(FixedClock::default_test_time()));
    let result = world.pipeline.run_task(world.task("How many runways?")).unwrap();

    // The question each suite backend received equals the last question of
    // the preceding drafter/revisor response, verbatim.
    let expected = [QUESTION_1, QUESTION_2, QUESTION_3];
    for (i, source) in [DRAFT, REVISION_1, REVISION_2].iter().enumerate() {
        assert_eq!(extract_question(source).unwrap(), expected[i]);
    }
    let suite_questions: Vec<String> = world
        .gateway
        .call_log()
        .into_iter()
        .filter(|c| c.backend_id.starts_with('v'))
        .map(|c| c.question.unwrap())
        .collect();
    assert_eq!(
        suite_questions,
        vec![
            QUESTION_1, QUESTION_1, QUESTION_2, QUESTION_2, QUESTION_3, QUESTION_3
        ]
    );

    // And the inquirer turns log exactly those questions.
    let inquirer_questions: Vec<&str> = result
        .memory
        .turns()
        .iter()
        .filter(|t| t.role == Role::Inquirer)
        .map(|t| t.response_raw.as_str())
        .collect();
    assert_eq!(inquirer_questions, expected);
}

#[test]
fn backbone_never_sees_an_image() {
    let world = WorldBuilder::new(2, 3)
        .call_logging()
        .build(Arc::new(FixedClock::default_test_time()));
    world.pipeline.run_task(world.task("How many runways?")).unwrap();
    for call in world.gateway.call_log() {
        if call.backend_id == "backbone" {
            assert!(!call.has_image, "backbone call carried an image");
        }
    }
}

#[test]
fn revisor_context_accumulates_under_full_transcript() {
    let world = WorldBuilder::new(2, 3).build(Arc::new(FixedClock::default_test_time()));
    let result = world.pipeline.run_task(world.task("How many runways?")).unwrap();
    let revisor_prompts: Vec<&str> = result
        .memory
        .turns()
        .iter()
        .filter(|t| t.role == Role::Revisor)
        .map(|t| t.prompt_rendered.as_str())
        .collect();
    assert_eq!(revisor_prompts.len(), 3);

    // Round 1 evidence keeps appearing in later rounds.
    let round1_evidence = "v1: three taxiways.";
    assert!(revisor_prompts[0].contains(round1_evidence));
    assert!(revisor_prompts[1].contains(round1_evidence));
    assert!(revisor_prompts[2].contains(round1_evidence));
    // Current-round evidence is present, labeled with stable tool indices.
    assert!(revisor_prompts[2].contains("Tool output [1] (v1): v1: one terminal."));
    assert!(revisor_prompts[2].contains("Tool output [2] (v2): v2: one terminal."));
    // Prior revisions ride along as assistant turns.
    assert!(revisor_prompts[2].contains(REVISION_2));
    // The original question is restated once at the top.
    assert!(revisor_prompts[0].contains("User question: How many runways?"));
}

#[test]
fn last_round_policy_drops_old_evidence() {
    let world = WorldBuilder::new(2, 3)
        .context_policy(ContextPolicy::LastRound)
        .build(Arc::new(FixedClock::default_test_time()));
    let result = world.pipeline.run_task(world.task("How many runways?")).unwrap();
    let revisor_prompts: Vec<&str> = result
        .memory
        .turns()
        .iter()
        .filter(|t| t.role == Role::Revisor)
        .map(|t| t.prompt_rendered.as_str())
        .collect();
    assert!(!revisor_prompts[2].contains("v1: three taxiways."));
    assert!(revisor_prompts[2].contains("v1: one terminal."));
    assert!(revisor_prompts[2].contains(REVISION_2));
    assert!(revisor_prompts[2].contains("User question: How many runways?"));
}

#[test]
fn spokesman_gets_last_revision_and_directive() {
    let world = WorldBuilder::new(2, 3).build(Arc::new(FixedClock::default_test_time()));
    let result = world.pipeline.run_task(world.task("How many runways?")).unwrap();
    let spokesman = result
        .memory
        .turns()
        .iter()
        .find(|t| t.role == Role::Spokesman)
        .unwrap();
    assert!(spokesman.prompt_rendered.contains(REVISION_3));
    assert!(spokesman
        .prompt_rendered
        .contains("Directly answer the user's question based on the last revision."));
    assert!(!spokesman.prompt_rendered.contains(REVISION_1));
}

#[test]
fn time_binding_rendered_from_injected_clock() {
    let world = WorldBuilder::new(1, 1).build(Arc::new(FixedClock::default_test_time()));
    let result = world.pipeline.run_task(world.task("How many runways?")).unwrap();
    let drafter = result
        .memory
        .turns()
        .iter()
        .find(|t| t.role == Role::Drafter)
        .unwrap();
    assert!(drafter
        .prompt_rendered
        .contains("Current time: 2026-01-02 03:04:05 UTC"));
}

#[test]
fn caption_and_question_enter_drafter_context() {
    let world = WorldBuilder::new(1, 1).build(Arc::new(FixedClock::default_test_time()));
    let result = world.pipeline.run_task(world.task("How many runways?")).unwrap();
    let drafter = result
        .memory
        .turns()
        .iter()
        .find(|t| t.role == Role::Drafter)
        .unwrap();
    assert!(drafter.prompt_rendered.contains("[user] User question: How many runways?"));
    assert!(drafter
        .prompt_rendered
        .contains(&format!("[assistant] Image caption: {CAPTION}")));
    assert!(drafter
        .prompt_rendered
        .contains("[user] Reflect on the user's original question and the actions taken thus far."));
}

#[test]
fn run_phase_out_of_order_is_missing_context() {
    let world = WorldBuilder::new(1, 1).build(Arc::new(FixedClock::default_test_time()));
    let mut memory = ConversationMemory::new(world.task("Q?"));
    let err = world
        .pipeline
        .run_phase(&mut memory, PhaseKind::Drafter)
        .unwrap_err();
    assert!(matches!(err, PipelineError::MissingContext { .. }));

    let err = world
        .pipeline
        .run_phase(&mut memory, PhaseKind::Spokesman)
        .unwrap_err();
    assert!(matches!(err, PipelineError::MissingContext { .. }));

    // Captioner first works, then the drafter proceeds.
    world.pipeline.run_phase(&mut memory, PhaseKind::Captioner).unwrap();
    world.pipeline.run_phase(&mut memory, PhaseKind::Drafter).unwrap();
    assert_eq!(memory.len(), 2);
}

#[test]
fn fully_failed_fanout_aborts_with_suite_phase() {
    let failing = serde_json::json!({
        "roles": {"vision": {"default": {"error": "offline"}}}
    })
    .to_string();
    let world = WorldBuilder::new(2, 3)
        .vision_jsons(vec![failing.clone(), failing])
        .build(Arc::new(FixedClock::default_test_time()));
    let err = world.pipeline.run_task(world.task("Q?")).unwrap_err();
    match &err {
        PipelineError::Gateway { phase, source } => {
            assert_eq!(phase, "suite[1]");
            assert!(matches!(source, GatewayError::AllBackendsFailed(2)));
        }
        other => panic!("expected suite gateway error, got {other:?}"),
    }
    assert_eq!(err.phase(), Some("suite[1]"));
}

#[test]
fn single_backend_failure_becomes_unavailable_marker() {
    let failing = serde_json::json!({
        "roles": {"vision": {"default": {"error": "offline"}}}
    })
    .to_string();
    let world = WorldBuilder::new(2, 1)
        .vision_jsons(vec![vision_script_json("v1"), failing])
        .build(Arc::new(FixedClock::default_test_time()));
    let result = world.pipeline.run_task(world.task("Q?")).unwrap();
    let suite_turns: Vec<_> = result
        .memory
        .turns()
        .iter()
        .filter(|t| t.role == Role::VisionSuite)
        .collect();
    assert_eq!(suite_turns.len(), 2);
    assert_eq!(suite_turns[0].response_raw, "v1: three taxiways.");
    assert_eq!(suite_turns[1].response_raw, "[backend v2 unavailable]");
    // The revisor sees the marker, keeping citation slots aligned.
    let revisor = result
        .memory
        .turns()
        .iter()
        .find(|t| t.role == Role::Revisor)
        .unwrap();
    assert!(revisor
        .prompt_rendered
        .contains("Tool output [2] (v2): [backend v2 unavailable]"));
}

#[test]
fn model_mediated_inquirer_uses_backbone() {
    let mut backbone: serde_json::Value =
        serde_json::from_str(&backbone_script_json()).unwrap();
    backbone["roles"]["inquirer"] = serde_json::json!([
        "Forwarding the follow-up now. How many taxiways are visible?",
        "Extracted the next question. How many aircraft are parked?",
        "One more check remains. Is a terminal building visible?",
    ]);
    let world = WorldBuilder::new(1, 3)
        .inquirer_mode(InquirerMode::ModelMediated)
        .backbone_json(backbone.to_string())
        .call_logging()
        .build(Arc::new(FixedClock::default_test_time()));
    let result = world.pipeline.run_task(world.task("How many runways?")).unwrap();
    let inquirer_turns: Vec<_> = result
        .memory
        .turns()
        .iter()
        .filter(|t| t.role == Role::Inquirer)
        .collect();
    assert_eq!(inquirer_turns.len(), 3);
    for t in &inquirer_turns {
        assert_eq!(t.backend_id, "backbone");
    }
    // The suite still receives clean extracted questions.
    let suite_questions: Vec<String> = world
        .gateway
        .call_log()
        .into_iter()
        .filter(|c| c.backend_id.starts_with('v'))
        .map(|c| c.question.unwrap())
        .collect();
    assert_eq!(suite_questions, vec![QUESTION_1, QUESTION_2, QUESTION_3]);
}

#[test]
fn audit_round_trips_through_pipeline() {
    let world = WorldBuilder::new(2, 3).build(Arc::new(StepClock::starting_at_default(10)));
    let result = world.pipeline.run_task(world.task("How many runways?")).unwrap();
    let mut buf = Vec::new();
    let written = write_audit(&result.memory, &result.final_answer, &mut buf).unwrap();
    assert_eq!(written.turns.len(), 15);
    let read = read_audit(&buf[..]).unwrap();
    assert_eq!(written, read);
    assert_eq!(read.final_answer, FINAL_ANSWER);
    assert_eq!(read.turns[0].task_id, "task-1");
}

#[test]
fn per_phase_latency_keys_in_execution_order() {
    let world = WorldBuilder::new(2, 2).build(Arc::new(StepClock::starting_at_default(10)));
    let result = world.pipeline.run_task(world.task("Q?")).unwrap();
    let keys: Vec<&str> = result
        .per_phase_latency
        .iter()
        .map(|(k, _)| k.as_str())
        .collect();
    assert_eq!(
        keys,
        vec![
            "captioner",
            "drafter",
            "inquirer[1]",
            "suite[1]",
            "revisor[1]",
            "inquirer[2]",
            "suite[2]",
            "revisor[2]",
            "spokesman"
        ]
    );
    for (_, latency) in &result.per_phase_latency {
        assert!(*latency >= 0.0);
    }
}

#[test]
fn serial_latencies_sum_below_total() {
    let world = WorldBuilder::new(2, 1).build(Arc::new(SystemClock));
    let result = world.pipeline.run_task(world.task("Q?")).unwrap();
    let total = result.memory.total_latency_s();
    let serial_sum: f64 = result
        .per_phase_latency
        .iter()
        .filter(|(k, _)| !k.starts_with("suite"))
        .map(|(_, v)| v)
        .sum();
    assert!(total >= serial_sum - 1e-9, "total {total} < serial sum {serial_sum}");
}
