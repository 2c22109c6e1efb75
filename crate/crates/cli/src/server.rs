//! Survey service: blinded stimuli, response collection and export.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use anyhow::{bail, Result};
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use outfitgen_core::catalog::{canonical_label, canonical_occasion};
use outfitgen_core::eval::survey::{instrument, validate_demographics, FieldError, RANK_QUESTION_ID};
use outfitgen_core::eval::{Answer, Demographics};
use outfitgen_core::hashing::hash_fields;
use outfitgen_core::jsonl::{parse_jsonl, JsonlAppender};
use outfitgen_core::pipeline::{GenerationRecord, StrategyKind};
use outfitgen_core::{Experiment, SurveyResponse};

use crate::config::{RunConfig, StimulusSpec};

#[derive(Debug, Clone)]
struct Card {
    card_id: String,
    record_id: String,
    method: StrategyKind,
}

#[derive(Debug, Clone)]
enum StimulusBody {
    Single { record_id: String, method: StrategyKind },
    Set(Vec<Card>),
}

#[derive(Debug, Clone)]
struct Stimulus {
    id: String,
    body: StimulusBody,
}

struct Store {
    lines: Vec<String>,
    keys: HashSet<(String, Experiment, String)>,
    participants: HashSet<String>,
    sink: JsonlAppender,
}

pub struct AppState {
    stimuli: BTreeMap<Experiment, Vec<Stimulus>>,
    records: HashMap<String, GenerationRecord>,
    images_dir: PathBuf,
    admin_token: Option<String>,
    store: Mutex<Store>,
}

fn image_url(record_id: &str) -> String {
    format!("/api/records/{record_id}/image")
}

fn find_record<'a>(
    records: &'a HashMap<String, GenerationRecord>,
    spec: &StimulusSpec,
    method: StrategyKind,
) -> Option<&'a GenerationRecord> {
    let style = canonical_label(&spec.style);
    let occasion = canonical_occasion(&spec.occasion);
    let wearer = canonical_label(&spec.wearer_type);
    let mut hits: Vec<_> = records
        .values()
        .filter(|r| {
            r.strategy == method
                && r.triplet.style == style
                && r.triplet.occasion == occasion
                && r.triplet.wearer_type == wearer
        })
        .collect();
    hits.sort_by(|a, b| a.id.cmp(&b.id));
    hits.into_iter().next()
}

fn resolve_stimuli(
    specs: &BTreeMap<Experiment, Vec<StimulusSpec>>,
    records: &HashMap<String, GenerationRecord>,
) -> Result<BTreeMap<Experiment, Vec<Stimulus>>> {
    let mut out = BTreeMap::new();
    for (&exp, list) in specs {
        let mut resolved = Vec::new();
        for spec in list {
            let body = match exp {
                Experiment::E1 | Experiment::E2 => {
                    let Some(name) = &spec.strategy else {
                        bail!("stimulus {}: {exp} stimuli need a strategy", spec.id);
                    };
                    let method: StrategyKind = name.parse().map_err(anyhow::Error::msg)?;
                    let Some(rec) = find_record(records, spec, method) else {
                        bail!("stimulus {}: no {method} record for that triplet", spec.id);
                    };
                    StimulusBody::Single {
                        record_id: rec.id.clone(),
                        method,
                    }
                }
                Experiment::E3 => {
                    let mut cards = Vec::new();
                    for method in StrategyKind::ALL {
                        let Some(rec) = find_record(records, spec, method) else {
                            bail!("stimulus {}: no {method} record for that triplet", spec.id);
                        };
                        cards.push((rec.id.clone(), method));
                    }
                    // fixed per-stimulus shuffle so card position carries no method information
                    cards.sort_by_key(|(rid, _)| hash_fields([spec.id.as_str(), rid.as_str()]));
                    StimulusBody::Set(
                        cards
                            .into_iter()
                            .enumerate()
                            .map(|(i, (record_id, method))| Card {
                                card_id: format!("c{}", i + 1),
                                record_id,
                                method,
                            })
                            .collect(),
                    )
                }
            };
            resolved.push(Stimulus {
                id: spec.id.clone(),
                body,
            });
        }
        out.insert(exp, resolved);
    }
    Ok(out)
}

impl AppState {
    pub fn from_config(cfg: &RunConfig, records: HashMap<String, GenerationRecord>) -> Result<Self> {
        let stimuli = resolve_stimuli(&cfg.survey.stimuli, &records)?;
        let path = cfg.responses_path();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let existing = if path.exists() {
            std::fs::read_to_string(&path)?
        } else {
            String::new()
        };
        let parsed: Vec<SurveyResponse> = parse_jsonl(&existing, &path.display().to_string())?;
        let lines: Vec<String> = existing.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect();
        let keys = parsed
            .iter()
            .map(|r| (r.participant_id.clone(), r.experiment, r.stimulus_id.clone()))
            .collect();
        let participants = parsed.iter().map(|r| r.participant_id.clone()).collect();
        Ok(Self {
            stimuli,
            records,
            images_dir: cfg.images_dir(),
            admin_token: cfg.survey.admin_token.clone(),
            store: Mutex::new(Store {
                lines,
                keys,
                participants,
                sink: JsonlAppender::open(&path)?,
            }),
        })
    }

    pub fn with_admin_token(mut self, token: Option<String>) -> Self {
        if token.is_some() {
            self.admin_token = token;
        }
        self
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/experiments/{experiment}/items", get(items))
        .route("/api/responses", post(submit))
        .route("/api/responses/export", get(export))
        .route("/api/records/{id}/image", get(image))
        .with_state(state)
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn field_errors(errors: Vec<FieldError>) -> Response {
    (StatusCode::UNPROCESSABLE_ENTITY, Json(json!({ "errors": errors }))).into_response()
}

async fn items(State(state): State<Arc<AppState>>, UrlPath(experiment): UrlPath<String>) -> Response {
    let Ok(exp) = experiment.parse::<Experiment>() else {
        return error(StatusCode::NOT_FOUND, format!("unknown experiment {experiment}"));
    };
    let list = state.stimuli.get(&exp).map(Vec::as_slice).unwrap_or(&[]);
    let items: Vec<Value> = list
        .iter()
        .map(|s| match (&s.body, exp) {
            (StimulusBody::Single { record_id, .. }, Experiment::E2) => json!({
                "stimulus_id": s.id,
                "description": state.records.get(record_id).map(|r| r.description.as_str()).unwrap_or(""),
            }),
            (StimulusBody::Single { record_id, .. }, _) => json!({
                "stimulus_id": s.id,
                "image_url": image_url(record_id),
            }),
            (StimulusBody::Set(cards), _) => json!({
                "stimulus_id": s.id,
                "cards": cards
                    .iter()
                    .map(|c| json!({ "card_id": c.card_id, "image_url": image_url(&c.record_id) }))
                    .collect::<Vec<_>>(),
            }),
        })
        .collect();
    Json(json!({
        "experiment": exp,
        "questions": instrument(exp).questions,
        "items": items,
    }))
    .into_response()
}

#[derive(Debug, Deserialize)]
struct Submission {
    #[serde(default)]
    participant_id: Option<String>,
    demographics: Value,
    experiment: String,
    stimulus_id: String,
    answers: BTreeMap<String, Value>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct Accepted {
    pub participant_id: String,
    pub timestamp: String,
}

fn convert_answers(
    experiment: Experiment,
    stimulus: &Stimulus,
    raw: &BTreeMap<String, Value>,
    errors: &mut Vec<FieldError>,
) -> BTreeMap<String, Answer> {
    let mut out = BTreeMap::new();
    for (id, value) in raw {
        let field = format!("answers.{id}");
        if experiment == Experiment::E3 && id == RANK_QUESTION_ID {
            let StimulusBody::Set(cards) = &stimulus.body else { continue };
            let Some(list) = value.as_array() else {
                errors.push(FieldError::new(field, "expected a list of card ids"));
                continue;
            };
            let mut order = Vec::new();
            for v in list {
                match v.as_str().and_then(|c| cards.iter().find(|card| card.card_id == c)) {
                    Some(card) => order.push(card.method),
                    None => errors.push(FieldError::new(field.clone(), format!("unknown card {v}"))),
                }
            }
            out.insert(id.clone(), Answer::Ranking(order));
            continue;
        }
        match serde_json::from_value::<Answer>(value.clone()) {
            Ok(a) => {
                out.insert(id.clone(), a);
            }
            Err(_) => errors.push(FieldError::new(field, format!("unsupported value {value}"))),
        }
    }
    out
}

async fn submit(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let sub: Submission = match serde_json::from_slice(&body) {
        Ok(s) => s,
        Err(e) => return field_errors(vec![FieldError::new("body", e.to_string())]),
    };
    let Ok(experiment) = sub.experiment.parse::<Experiment>() else {
        return field_errors(vec![FieldError::new("experiment", "expected e1, e2 or e3")]);
    };
    let Some(stimulus) = state
        .stimuli
        .get(&experiment)
        .and_then(|l| l.iter().find(|s| s.id == sub.stimulus_id))
    else {
        return error(StatusCode::NOT_FOUND, format!("unknown stimulus {}", sub.stimulus_id));
    };

    let mut errors = Vec::new();
    let demographics = match serde_json::from_value::<Demographics>(sub.demographics) {
        Ok(d) => {
            errors.extend(validate_demographics(&d));
            Some(d)
        }
        Err(e) => {
            errors.push(FieldError::new("demographics", e.to_string()));
            None
        }
    };
    let answers = convert_answers(experiment, stimulus, &sub.answers, &mut errors);
    let method = match &stimulus.body {
        StimulusBody::Single { method, .. } => Some(*method),
        StimulusBody::Set(_) => None,
    };
    if let Some(pid) = &sub.participant_id {
        let known = state.store.lock().expect("store lock").participants.contains(pid);
        if !known {
            errors.push(FieldError::new("participant_id", "not issued by this server"));
        }
    }
    let Some(demographics) = demographics else {
        return field_errors(errors);
    };
    let mut response = SurveyResponse {
        participant_id: sub
            .participant_id
            .clone()
            .unwrap_or_else(|| uuid::Uuid::new_v4().simple().to_string()),
        demographics,
        experiment,
        stimulus_id: stimulus.id.clone(),
        method,
        answers,
        timestamp: String::new(),
    };
    errors.extend(response.validate());
    if !errors.is_empty() {
        errors.dedup();
        return field_errors(errors);
    }

    let mut store = state.store.lock().expect("store lock");
    let key = (response.participant_id.clone(), experiment, response.stimulus_id.clone());
    if store.keys.contains(&key) {
        return error(StatusCode::CONFLICT, "already answered this stimulus");
    }
    response.timestamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
    let line = serde_json::to_string(&response).expect("serializable");
    if let Err(e) = store.sink.append_raw(&line) {
        return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string());
    }
    store.lines.push(line);
    store.keys.insert(key);
    store.participants.insert(response.participant_id.clone());
    (
        StatusCode::CREATED,
        Json(Accepted {
            participant_id: response.participant_id,
            timestamp: response.timestamp,
        }),
    )
        .into_response()
}

async fn export(State(state): State<Arc<AppState>>, headers: HeaderMap) -> Response {
    let Some(token) = &state.admin_token else {
        return error(StatusCode::FORBIDDEN, "export is disabled: no admin token configured");
    };
    let presented = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if presented != Some(token.as_str()) {
        return error(StatusCode::UNAUTHORIZED, "admin token required");
    }
    let store = state.store.lock().expect("store lock");
    let mut body = String::new();
    for line in &store.lines {
        body.push_str(line);
        body.push('\n');
    }
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}

async fn image(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(name) = state.records.get(&id).and_then(|r| r.image_path.clone()) else {
        return error(StatusCode::NOT_FOUND, format!("no image for record {id}"));
    };
    match tokio::fs::read(state.images_dir.join(name)).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, "image/png")], bytes).into_response(),
        Err(_) => error(StatusCode::NOT_FOUND, format!("image file for record {id} is missing")),
    }
}

pub async fn serve(state: AppState, bind: &str) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
