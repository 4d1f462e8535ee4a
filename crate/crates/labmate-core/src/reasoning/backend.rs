//! Backend transports: the deterministic mock and the chat-completions
//! HTTP client.

use std::time::Duration;

use serde_json::{json, Value};

use crate::decision::compose_message;
use crate::perception::{ClassLabel, Scene};
use crate::rules::{classify_scene, RuleConfig};
use crate::seeding;

use super::{
    parse_response, parse_response_lenient, BackendConfig, BackendKind, PromptBundle,
    ReasoningError, VlmResponse,
};

/// Environment variable holding the bearer token for HTTP backends.
pub const API_KEY_ENV: &str = "LABMATE_API_KEY";

fn yes_no(v: bool) -> &'static str {
    if v {
        "Yes"
    } else {
        "No"
    }
}

/// The equipment label nearest to any human, used to instantiate the
/// interaction message. Falls back to the fumehood when the scene carries
/// no equipment (possible when labels were flipped onto an empty bench).
fn nearest_equipment_label(scene: &Scene) -> ClassLabel {
    let mut best: Option<(f64, ClassLabel)> = None;
    for h in scene.humans() {
        for e in scene.equipment() {
            let d = h.position.distance(&e.position);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, e.label));
            }
        }
    }
    best.map(|(_, l)| l)
        .or_else(|| scene.equipment().next().map(|e| e.label))
        .unwrap_or(ClassLabel::Fumehood)
}

/// Deterministic stand-in for a fine-tuned VLM.
///
/// Computes the rule-oracle labels, then flips each label independently
/// with probability `epsilon` using a generator seeded by
/// `hash(seed, scene_id)`. The same (seed, scene) always yields the same
/// response, regardless of evaluation order or thread schedule.
pub fn mock_judgment(
    scene: &Scene,
    cfg: &BackendConfig,
    rules: &RuleConfig,
) -> Result<VlmResponse, ReasoningError> {
    cfg.validate()?;
    let oracle = classify_scene(scene, rules)?;

    let mut rng = seeding::rng_for(cfg.seed, &scene.scene_id);
    use rand::Rng;
    // Fixed draw order: obstruction first, then interaction.
    let flip_obstruction = rng.random::<f64>() < cfg.epsilon;
    let flip_interaction = rng.random::<f64>() < cfg.epsilon;
    let obstruction = oracle.obstruction ^ flip_obstruction;
    let interaction = oracle.interaction ^ flip_interaction;

    let message = if obstruction && interaction {
        compose_message(true, true, nearest_equipment_label(scene))
            .expect("obstruction is true here")
    } else {
        String::new()
    };

    let raw = format!(
        "Obstruction: {}; Interaction: {}; Message: {}",
        yes_no(obstruction),
        yes_no(interaction),
        message
    );
    Ok(VlmResponse { obstruction, interaction, message, raw })
}

fn request_body(bundle: &PromptBundle, cfg: &BackendConfig) -> Value {
    let content = match &bundle.image_ref {
        Some(image) => json!([
            { "type": "text", "text": bundle.text },
            { "type": "image_url", "image_url": { "url": image } },
        ]),
        None => Value::String(bundle.text.clone()),
    };
    json!({
        "model": cfg.model_name,
        "messages": [ { "role": "user", "content": content } ],
    })
}

fn extract_chat_text(body: &Value) -> Option<&str> {
    body.get("choices")?.get(0)?.get("message")?.get("content")?.as_str()
}

fn backoff_delay(attempt: u32) -> Duration {
    // 100 ms, 200 ms, 400 ms, ... capped at 2 s
    let ms = 100u64.saturating_mul(1u64 << attempt.min(10)).min(2_000);
    Duration::from_millis(ms)
}

fn http_query(bundle: &PromptBundle, cfg: &BackendConfig) -> Result<VlmResponse, ReasoningError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
        .http_status_as_error(false)
        .build()
        .into();
    let body = request_body(bundle, cfg);
    let api_key = std::env::var(API_KEY_ENV).ok();

    let mut attempts = 0u32;
    let text = loop {
        attempts += 1;
        let mut request = agent.post(&cfg.endpoint_url);
        if let Some(key) = &api_key {
            request = request.header("authorization", &format!("Bearer {key}"));
        }
        let outcome = request.send_json(&body);

        let retry_detail = match outcome {
            Ok(mut response) => {
                let status = response.status().as_u16();
                if (200..300).contains(&status) {
                    let parsed: Value =
                        response.body_mut().read_json().map_err(|e| ReasoningError::Transport {
                            detail: format!("unreadable response body: {e}"),
                            attempts,
                        })?;
                    match extract_chat_text(&parsed) {
                        Some(t) => break t.to_string(),
                        None => {
                            return Err(ReasoningError::Transport {
                                detail: "response has no choices[0].message.content".to_string(),
                                attempts,
                            })
                        }
                    }
                } else if status == 429 || status >= 500 {
                    format!("http status {status}")
                } else {
                    return Err(ReasoningError::Transport {
                        detail: format!("http status {status}"),
                        attempts,
                    });
                }
            }
            Err(ureq::Error::Timeout(reason)) => {
                if attempts > cfg.max_retries {
                    return Err(ReasoningError::Timeout {
                        detail: reason.to_string(),
                        attempts,
                    });
                }
                format!("timeout: {reason}")
            }
            Err(e) => format!("{e}"),
        };

        if attempts > cfg.max_retries {
            return Err(ReasoningError::Transport { detail: retry_detail, attempts });
        }
        std::thread::sleep(backoff_delay(attempts - 1));
    };

    let parse = if cfg.lenient_parse { parse_response_lenient } else { parse_response };
    parse(&text).map_err(|error| ReasoningError::Parse { raw: text.clone(), error })
}

/// Ask the configured backend for a judgment on the prompt/scene.
///
/// The mock ignores the prompt text and judges the scene geometry; the
/// HTTP path POSTs a chat-completions body and parses the model's text.
pub fn query_backend(
    bundle: &PromptBundle,
    scene: &Scene,
    cfg: &BackendConfig,
    rules: &RuleConfig,
) -> Result<VlmResponse, ReasoningError> {
    cfg.validate()?;
    match cfg.kind {
        BackendKind::Mock => mock_judgment(scene, cfg, rules),
        BackendKind::Http => http_query(bundle, cfg),
    }
}
