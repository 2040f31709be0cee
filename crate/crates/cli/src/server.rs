//! JSON API over a finished artifact and the data it was computed from.

use std::sync::{Arc, RwLock};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use fealm::interpret::{group_contributions, Contributions};
use fealm::preprocess::zscore;
use fealm::{DataMatrix, ProjectionSpec, RunArtifact};
use serde::{Deserialize, Serialize};
use serde_json::json;

const INDEX_HTML: &str = include_str!("index.html");

pub struct AppState {
    artifact: RunArtifact,
    artifact_json: String,
    raw: DataMatrix,
    standardized: DataMatrix,
    groups: RwLock<Vec<Vec<usize>>>,
}

impl AppState {
    /// Fails if the table does not have the artifact's shape and attributes.
    pub fn new(artifact: RunArtifact, raw: DataMatrix) -> anyhow::Result<Arc<Self>> {
        if raw.n() != artifact.n_instances || raw.m() != artifact.attribute_names.len() {
            anyhow::bail!(
                "CSV has {} rows x {} attributes but the artifact was computed on {} x {}",
                raw.n(),
                raw.m(),
                artifact.n_instances,
                artifact.attribute_names.len()
            );
        }
        if raw.attribute_names() != artifact.attribute_names.as_slice() {
            anyhow::bail!(
                "CSV attributes {:?} differ from the artifact's {:?}",
                raw.attribute_names(),
                artifact.attribute_names
            );
        }
        let (standardized, _) = zscore(&raw)?;
        let artifact_json = artifact.to_json()?;
        Ok(Arc::new(Self {
            artifact,
            artifact_json,
            raw,
            standardized,
            groups: RwLock::new(Vec::new()),
        }))
    }
}

type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/", get(|| async { Html(INDEX_HTML) }))
        .route("/api/artifact", get(artifact))
        .route("/api/result/{i}", get(result))
        .route("/api/meta", get(meta))
        .route("/api/groups", get(get_groups).post(set_groups))
        .route("/api/contributions", axum::routing::post(contributions))
        .route("/api/attribute/{name}", get(attribute))
        .with_state(state)
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

fn not_found(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, msg.into())
}

async fn artifact(State(s): State<Shared>) -> impl IntoResponse {
    ([(axum::http::header::CONTENT_TYPE, "application/json")], s.artifact_json.clone())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ResultView {
    pub index: usize,
    pub points: Vec<[f64; 2]>,
    pub projection: ProjectionSpec,
    pub cluster: Option<usize>,
    pub representative: bool,
    pub objective_value: Option<f64>,
}

async fn result(State(s): State<Shared>, Path(i): Path<usize>) -> Result<Json<ResultView>, ApiError> {
    let a = &s.artifact;
    if i >= a.len() {
        return Err(not_found(format!("result {i} does not exist (have {})", a.len())));
    }
    Ok(Json(ResultView {
        index: i,
        points: a.embeddings.get(i).cloned().unwrap_or_default(),
        projection: a.projections[i].clone(),
        cluster: a.clusters.get(i).copied(),
        representative: a.representatives.contains(&i),
        objective_value: i.checked_sub(1).and_then(|j| a.objective_values.get(j).copied()),
    }))
}

async fn meta(State(s): State<Shared>) -> impl IntoResponse {
    let a = &s.artifact;
    Json(json!({
        "points": a.meta_points,
        "clusters": a.clusters,
        "representatives": a.representatives,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GroupsBody {
    pub groups: Vec<Vec<usize>>,
}

fn check_groups(groups: &[Vec<usize>], n: usize) -> Result<(), ApiError> {
    let mut seen = vec![false; n];
    for (g, members) in groups.iter().enumerate() {
        for &i in members {
            if i >= n {
                return Err(bad_request(format!("group {g}: instance {i} out of range (n = {n})")));
            }
            if seen[i] {
                return Err(bad_request(format!("instance {i} belongs to more than one group")));
            }
            seen[i] = true;
        }
    }
    Ok(())
}

async fn get_groups(State(s): State<Shared>) -> Json<GroupsBody> {
    Json(GroupsBody {
        groups: s.groups.read().expect("group lock").clone(),
    })
}

async fn set_groups(State(s): State<Shared>, Json(body): Json<GroupsBody>) -> Result<Json<GroupsBody>, ApiError> {
    check_groups(&body.groups, s.raw.n())?;
    *s.groups.write().expect("group lock") = body.groups.clone();
    Ok(Json(body))
}

fn default_alpha() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
pub struct ContributionRequest {
    /// Falls back to the groups stored by `POST /api/groups`.
    #[serde(default)]
    pub groups: Option<Vec<Vec<usize>>>,
    /// Result the groups were drawn on.
    #[serde(default)]
    pub target: Option<usize>,
    /// Group used as background for every other group; one-vs-rest if absent.
    #[serde(default)]
    pub background: Option<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ContributionResponse {
    pub target: Option<usize>,
    pub attribute_names: Vec<String>,
    /// Index of the target group of each entry in `contributions`.
    pub groups: Vec<usize>,
    pub contributions: Vec<Contributions>,
}

async fn contributions(
    State(s): State<Shared>,
    Json(req): Json<ContributionRequest>,
) -> Result<Json<ContributionResponse>, ApiError> {
    if let Some(t) = req.target {
        if t >= s.artifact.len() {
            return Err(not_found(format!("result {t} does not exist")));
        }
    }
    let groups = match req.groups {
        Some(g) => g,
        None => s.groups.read().expect("group lock").clone(),
    };
    check_groups(&groups, s.raw.n())?;
    let contributions = group_contributions(s.standardized.values(), &groups, req.background, req.alpha)
        .map_err(|e| bad_request(e.to_string()))?;
    let target_groups = (0..groups.len()).filter(|&g| Some(g) != req.background).collect();
    Ok(Json(ContributionResponse {
        target: req.target,
        attribute_names: s.artifact.attribute_names.clone(),
        groups: target_groups,
        contributions,
    }))
}

async fn attribute(State(s): State<Shared>, Path(name): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let j = s
        .raw
        .column_index(&name)
        .ok_or_else(|| not_found(format!("no attribute named `{name}`")))?;
    let values: Vec<f64> = s.raw.values().column(j).iter().copied().collect();
    Ok(Json(json!({ "name": name, "values": values })))
}
