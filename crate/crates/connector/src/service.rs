//! HTTP surface of the connector: DCAT catalog endpoint, negotiation and
//! transfer routes, the token-gated data plane, and the admin API.

// helper fallibility is expressed as ready-to-send responses
#![allow(clippy::result_large_err)]

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use fedspace_core::dcat::{serialize_catalog, DCAT_CONTEXT};
use fedspace_core::negotiation::{NegotiationError, NegotiationMessage};
use fedspace_core::odrl::{PolicyDocument, PolicyError, PolicyKind, PolicyStatus};
use fedspace_core::store::{parse_ingestion_file, IngestError, PageRequest, StoreError};
use fedspace_core::transfer::{TransferError, TransferMessage};
use fedspace_core::urn::Urn;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::connector::{log_event, Connector, ConnectorError};
use crate::docs::{
    AdminPolicyDoc, ErrorDoc, FederateRequest, NegotiationProcessDoc, TransferProcessDoc,
};
use crate::http_source::HttpSourceStore;

pub fn router(connector: Arc<Connector>) -> Router {
    let mut app = Router::new()
        .route("/healthz", get(healthz))
        .route("/admin/ingest", post(admin_ingest))
        .route("/admin/federate", post(admin_federate))
        .route("/admin/policies", post(admin_create_policy).get(admin_list_policies))
        .route("/admin/store/domains", get(admin_store_domains))
        .route("/admin/store/domains/{urn}/datasets", get(admin_store_datasets))
        .route("/admin/store/datasets/{urn}", get(admin_store_dataset_detail))
        .route("/admin/store/search", get(admin_store_search))
        .route("/admin/store/entities/{urn}", axum::routing::delete(admin_delete_entity));

    if connector.config.role.includes_provider() {
        app = app
            .route("/catalog", get(get_catalog))
            .route("/catalog/datasets/{urn}", get(get_catalog_dataset))
            .route("/negotiations/request", post(negotiation_request))
            .route("/negotiations/{id}", get(get_negotiation))
            .route("/negotiations/{id}/events", post(negotiation_event))
            .route(
                "/negotiations/{id}/agreement/verification",
                post(negotiation_verification),
            )
            .route("/negotiations/{id}/termination", post(negotiation_termination))
            .route("/transfers/request", post(transfer_request))
            .route("/transfers/{id}", get(get_transfer))
            .route("/transfers/{id}/start", post(transfer_start))
            .route("/transfers/{id}/suspend", post(transfer_suspend))
            .route("/transfers/{id}/resume", post(transfer_resume))
            .route("/transfers/{id}/complete", post(transfer_complete))
            .route("/transfers/{id}/terminate", post(transfer_terminate))
            .route("/data/{urn}", get(get_data));
    }

    app.with_state(connector)
}

/// Bind and serve; returns the bound address and the server task handle.
pub async fn serve(
    connector: Arc<Connector>,
) -> Result<(SocketAddr, tokio::task::JoinHandle<std::io::Result<()>>), ConnectorError> {
    let listener = tokio::net::TcpListener::bind(&connector.config.listen_address).await?;
    let addr = listener.local_addr()?;
    log_event(
        "serve_start",
        &[
            ("participant", connector.config.participant_id.clone()),
            ("addr", addr.to_string()),
            ("role", format!("{:?}", connector.config.role)),
        ],
    );
    let app = router(connector);
    let handle = tokio::spawn(async move { axum::serve(listener, app).await });
    Ok((addr, handle))
}

fn error_response(status: StatusCode, error: &str, message: impl Into<String>) -> Response {
    (
        status,
        Json(ErrorDoc {
            error: error.to_string(),
            message: message.into(),
        }),
    )
        .into_response()
}

fn bad_request(message: impl Into<String>) -> Response {
    error_response(StatusCode::BAD_REQUEST, "malformed envelope", message)
}

fn check_admin(connector: &Connector, headers: &HeaderMap) -> Result<(), Response> {
    let presented = headers
        .get("X-Admin-Token")
        .and_then(|v| v.to_str().ok())
        .unwrap_or_default();
    if presented == connector.config.admin_token {
        Ok(())
    } else {
        Err(error_response(
            StatusCode::UNAUTHORIZED,
            "unauthorized",
            "missing or wrong X-Admin-Token header",
        ))
    }
}

fn parse_urn(text: &str) -> Result<Urn, Response> {
    Urn::parse(text).map_err(|e| bad_request(e.to_string()))
}

#[derive(Deserialize)]
struct PageParams {
    offset: Option<usize>,
    limit: Option<usize>,
}

fn page_request(connector: &Connector, params: &PageParams) -> Result<PageRequest, Response> {
    let limit = params.limit.unwrap_or(connector.config.page_size);
    PageRequest::new(params.offset.unwrap_or(0), limit)
        .ok_or_else(|| bad_request("limit must be >= 1"))
}

async fn healthz() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

// ---------------------------------------------------------------------------
// DCAT catalog endpoint

#[derive(Deserialize)]
struct CatalogQuery {
    filter: Option<String>,
}

async fn get_catalog(
    State(connector): State<Arc<Connector>>,
    Query(params): Query<CatalogQuery>,
) -> Response {
    connector.drain_changes();
    let token = match connector.facade_session() {
        Ok(token) => token,
        Err(e) => {
            return error_response(
                StatusCode::SERVICE_UNAVAILABLE,
                "store unavailable",
                e.to_string(),
            )
        }
    };
    let summaries = match connector.facade.list_catalogs(&token) {
        Ok(summaries) => summaries,
        Err(e) => {
            return error_response(
                StatusCode::SERVICE_UNAVAILABLE,
                "store unavailable",
                e.to_string(),
            )
        }
    };
    let mut catalogs = Vec::new();
    for summary in summaries {
        if let Some(filter) = params.filter.as_deref() {
            let hit = summary.domain.as_str().contains(filter) || summary.title.contains(filter);
            if !hit {
                continue;
            }
        }
        let catalog = match connector.facade.to_dcat(&token, &summary.domain) {
            Ok(catalog) => catalog,
            Err(e) => {
                return error_response(
                    StatusCode::SERVICE_UNAVAILABLE,
                    "store unavailable",
                    e.to_string(),
                )
            }
        };
        match catalog_value(&catalog) {
            Ok(value) => catalogs.push(value),
            Err(response) => return response,
        }
    }
    let root = json!({
        "@context": DCAT_CONTEXT,
        "@type": "dcat:Catalog",
        "dct:title": format!("{} federated catalog", connector.config.participant_id),
        "dct:description": "Catalogs federated by this dataspace provider",
        "dcat:catalog": catalogs,
    });
    Json(root).into_response()
}

fn catalog_value(catalog: &fedspace_core::dcat::DcatCatalog) -> Result<Value, Response> {
    let doc = serialize_catalog(catalog).map_err(|e| {
        error_response(StatusCode::INTERNAL_SERVER_ERROR, "mapping failure", e.to_string())
    })?;
    serde_json::from_str(&doc).map_err(|e| {
        error_response(StatusCode::INTERNAL_SERVER_ERROR, "mapping failure", e.to_string())
    })
}

async fn get_catalog_dataset(
    State(connector): State<Arc<Connector>>,
    Path(urn): Path<String>,
) -> Response {
    connector.drain_changes();
    let urn = match parse_urn(&urn) {
        Ok(urn) => urn,
        Err(r) => return r,
    };
    let meta = match connector.facade.resolve_internal(&urn) {
        Ok(meta) => meta,
        Err(_) => {
            return error_response(StatusCode::NOT_FOUND, "unknown dataset", urn.to_string())
        }
    };
    let catalog = match connector.facade.to_dcat_internal(&meta.domain_urn) {
        Ok(catalog) => catalog,
        Err(e) => {
            return error_response(
                StatusCode::SERVICE_UNAVAILABLE,
                "store unavailable",
                e.to_string(),
            )
        }
    };
    let value = match catalog_value(&catalog) {
        Ok(value) => value,
        Err(response) => return response,
    };
    let dataset = value["dcat:dataset"]
        .as_array()
        .and_then(|list| {
            list.iter()
                .find(|d| d["dct:identifier"] == json!(urn.as_str()))
                .cloned()
        });
    let Some(mut dataset) = dataset else {
        return error_response(StatusCode::NOT_FOUND, "unknown dataset", urn.to_string());
    };
    let service_id = format!("{urn}#access");
    let service = value["dcat:service"]
        .as_array()
        .and_then(|list| {
            list.iter()
                .find(|s| s["dct:identifier"] == json!(service_id))
                .cloned()
        })
        .unwrap_or(Value::Null);
    let offers: Vec<Value> = connector
        .policies
        .list_by_target(&urn)
        .iter()
        .filter(|p| p.kind == PolicyKind::Offer && p.status == PolicyStatus::Active)
        .map(|p| serde_json::to_value(PolicyDocument::from_policy(p)).unwrap_or(Value::Null))
        .collect();
    let object = dataset.as_object_mut().unwrap();
    object.insert("@context".to_string(), json!(DCAT_CONTEXT));
    object.insert("dcat:service".to_string(), json!([service]));
    object.insert("odrl:hasPolicy".to_string(), json!(offers));
    Json(dataset).into_response()
}

// ---------------------------------------------------------------------------
// Negotiation routes

fn parse_negotiation_message(body: &str) -> Result<NegotiationMessage, Response> {
    serde_json::from_str(body).map_err(|e| bad_request(e.to_string()))
}

fn negotiation_response(
    connector: &Connector,
    result: Result<
        (fedspace_core::negotiation::NegotiationProcess, Option<NegotiationMessage>),
        NegotiationError,
    >,
) -> Response {
    match result {
        Ok((process, outbound)) => {
            log_event(
                "negotiation",
                &[
                    ("process", process.process_id.clone()),
                    ("state", process.state.label().to_string()),
                ],
            );
            Json(NegotiationProcessDoc::new(&process, outbound)).into_response()
        }
        Err(NegotiationError::UnknownProcess(id)) => {
            error_response(StatusCode::NOT_FOUND, "unknown process", id)
        }
        Err(NegotiationError::MalformedMessage(m)) => bad_request(m),
        Err(NegotiationError::IllegalTransition { process_id, detail }) => {
            // the process (when known) has already been terminated or left in
            // its absorbing state; echo its current view with the conflict
            let body = process_id
                .as_deref()
                .and_then(|id| connector.negotiations.get(id))
                .map(|p| serde_json::to_value(NegotiationProcessDoc::new(&p, None)).unwrap());
            match body {
                Some(body) => (StatusCode::CONFLICT, Json(body)).into_response(),
                None => error_response(StatusCode::CONFLICT, "illegal transition", detail),
            }
        }
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
    }
}

async fn negotiation_request(State(connector): State<Arc<Connector>>, body: String) -> Response {
    connector.drain_changes();
    let message = match parse_negotiation_message(&body) {
        Ok(m @ NegotiationMessage::ContractRequest { .. }) => m,
        Ok(_) => return bad_request("expected ContractRequestMessage"),
        Err(r) => return r,
    };
    negotiation_response(&connector, connector.negotiations.handle(message))
}

async fn get_negotiation(
    State(connector): State<Arc<Connector>>,
    Path(id): Path<String>,
) -> Response {
    match connector.negotiations.get(&id) {
        Some(process) => Json(NegotiationProcessDoc::new(&process, None)).into_response(),
        None => error_response(StatusCode::NOT_FOUND, "unknown process", id),
    }
}

/// Checks the envelope variant and that its processId matches the path.
fn expect_process_id(message: &NegotiationMessage, path_id: &str) -> Result<(), Response> {
    match message.process_id() {
        Some(id) if id == path_id => Ok(()),
        Some(id) => Err(bad_request(format!(
            "processId `{id}` does not match route `{path_id}`"
        ))),
        None => Err(bad_request("missing processId")),
    }
}

async fn negotiation_event(
    State(connector): State<Arc<Connector>>,
    Path(id): Path<String>,
    body: String,
) -> Response {
    connector.drain_changes();
    let message = match parse_negotiation_message(&body) {
        Ok(m @ NegotiationMessage::Event { .. }) => m,
        Ok(_) => return bad_request("expected ContractNegotiationEventMessage"),
        Err(r) => return r,
    };
    if let Err(r) = expect_process_id(&message, &id) {
        return r;
    }
    negotiation_response(&connector, connector.negotiations.handle(message))
}

async fn negotiation_verification(
    State(connector): State<Arc<Connector>>,
    Path(id): Path<String>,
    body: String,
) -> Response {
    connector.drain_changes();
    let message = match parse_negotiation_message(&body) {
        Ok(m @ NegotiationMessage::Verification { .. }) => m,
        Ok(_) => return bad_request("expected ContractAgreementVerificationMessage"),
        Err(r) => return r,
    };
    if let Err(r) = expect_process_id(&message, &id) {
        return r;
    }
    negotiation_response(&connector, connector.negotiations.handle(message))
}

async fn negotiation_termination(
    State(connector): State<Arc<Connector>>,
    Path(id): Path<String>,
    body: String,
) -> Response {
    connector.drain_changes();
    let message = match parse_negotiation_message(&body) {
        Ok(m @ NegotiationMessage::Termination { .. }) => m,
        Ok(_) => return bad_request("expected ContractNegotiationTerminationMessage"),
        Err(r) => return r,
    };
    if let Err(r) = expect_process_id(&message, &id) {
        return r;
    }
    negotiation_response(&connector, connector.negotiations.handle(message))
}

// ---------------------------------------------------------------------------
// Transfer routes

fn transfer_response(
    result: Result<(fedspace_core::transfer::TransferProcess, Option<TransferMessage>), TransferError>,
) -> Response {
    match result {
        Ok((process, message)) => {
            log_event(
                "transfer",
                &[
                    ("transfer", process.transfer_id.clone()),
                    ("state", process.state.label().to_string()),
                ],
            );
            Json(TransferProcessDoc::new(&process, message)).into_response()
        }
        Err(e) => transfer_error_response(e),
    }
}

fn transfer_error_response(error: TransferError) -> Response {
    use TransferError as E;
    match error {
        E::UnknownAgreement(id) => error_response(StatusCode::NOT_FOUND, "unknown agreement", id),
        E::UnknownTransfer(id) => error_response(StatusCode::NOT_FOUND, "unknown transfer", id),
        E::FormatMismatch { .. } => bad_request(error.to_string()),
        E::AgreementInvalidated(_) | E::NegotiationNotFinalized(_) | E::IllegalTransition(_) => {
            error_response(StatusCode::CONFLICT, "conflict", error.to_string())
        }
        E::InvalidToken | E::ExpiredToken => {
            error_response(StatusCode::UNAUTHORIZED, "unauthorized", error.to_string())
        }
        E::WrongTarget => error_response(StatusCode::FORBIDDEN, "forbidden", error.to_string()),
        E::TransferNotStarted => {
            error_response(StatusCode::CONFLICT, "conflict", error.to_string())
        }
        E::DataUnavailable(m) => {
            error_response(StatusCode::INTERNAL_SERVER_ERROR, "data unavailable", m)
        }
        E::Persistence(m) => error_response(StatusCode::INTERNAL_SERVER_ERROR, "internal", m),
    }
}

async fn transfer_request(State(connector): State<Arc<Connector>>, body: String) -> Response {
    connector.drain_changes();
    let message: TransferMessage = match serde_json::from_str(&body) {
        Ok(m) => m,
        Err(e) => return bad_request(e.to_string()),
    };
    let TransferMessage::Request {
        agreement_id,
        format,
        callback_address,
    } = message
    else {
        return bad_request("expected TransferRequestMessage");
    };
    transfer_response(
        connector
            .transfers
            .request_transfer(&agreement_id, &format, &callback_address)
            .map(|p| (p, None)),
    )
}

async fn get_transfer(State(connector): State<Arc<Connector>>, Path(id): Path<String>) -> Response {
    match connector.transfers.get(&id) {
        Some(process) => Json(TransferProcessDoc::new(&process, None)).into_response(),
        None => error_response(StatusCode::NOT_FOUND, "unknown transfer", id),
    }
}

async fn transfer_start(State(connector): State<Arc<Connector>>, Path(id): Path<String>) -> Response {
    connector.drain_changes();
    transfer_response(connector.transfers.start_transfer(&id))
}

async fn transfer_suspend(State(connector): State<Arc<Connector>>, Path(id): Path<String>) -> Response {
    transfer_response(connector.transfers.suspend(&id).map(|p| (p, None)))
}

async fn transfer_resume(State(connector): State<Arc<Connector>>, Path(id): Path<String>) -> Response {
    connector.drain_changes();
    transfer_response(connector.transfers.resume(&id).map(|p| (p, None)))
}

async fn transfer_complete(State(connector): State<Arc<Connector>>, Path(id): Path<String>) -> Response {
    transfer_response(connector.transfers.complete(&id).map(|p| (p, None)))
}

async fn transfer_terminate(
    State(connector): State<Arc<Connector>>,
    Path(id): Path<String>,
    body: String,
) -> Response {
    let reason = serde_json::from_str::<TransferMessage>(&body)
        .ok()
        .and_then(|m| match m {
            TransferMessage::Termination { reason, .. } => Some(reason),
            _ => None,
        })
        .unwrap_or_else(|| "terminated by peer".to_string());
    transfer_response(connector.transfers.terminate(&id, &reason).map(|p| (p, None)))
}

async fn get_data(
    State(connector): State<Arc<Connector>>,
    Path(urn): Path<String>,
    headers: HeaderMap,
) -> Response {
    connector.drain_changes();
    let urn = match parse_urn(&urn) {
        Ok(urn) => urn,
        Err(r) => return r,
    };
    let token = headers
        .get("Authorization")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .unwrap_or_default();
    match connector.transfers.serve_data(token, &urn, connector.data_source()) {
        Ok(bytes) => {
            let content_type = connector
                .store
                .get_dataset_detail(&urn)
                .ok()
                .and_then(|d| d.aspect)
                .map(|a| a.format_hint)
                .unwrap_or_else(|| "application/octet-stream".to_string());
            ([("Content-Type", content_type)], bytes).into_response()
        }
        Err(e) => transfer_error_response(e),
    }
}

// ---------------------------------------------------------------------------
// Admin routes

async fn admin_ingest(
    State(connector): State<Arc<Connector>>,
    headers: HeaderMap,
    body: String,
) -> Response {
    if let Err(r) = check_admin(&connector, &headers) {
        return r;
    }
    let records = match parse_ingestion_file(&body) {
        Ok(records) => records,
        Err(e) => return bad_request(e.to_string()),
    };
    let report = match connector.store.ingest(&records) {
        Ok(report) => report,
        Err(e @ IngestError::Record { .. }) => return bad_request(e.to_string()),
        Err(e) => return bad_request(e.to_string()),
    };
    connector.drain_changes();
    log_event(
        "ingest",
        &[
            ("created", report.created.to_string()),
            ("updated", report.updated.to_string()),
        ],
    );
    Json(serde_json::to_value(report).unwrap()).into_response()
}

async fn admin_federate(
    State(connector): State<Arc<Connector>>,
    headers: HeaderMap,
    body: String,
) -> Response {
    if let Err(r) = check_admin(&connector, &headers) {
        return r;
    }
    let request: FederateRequest = match serde_json::from_str(&body) {
        Ok(request) => request,
        Err(e) => return bad_request(e.to_string()),
    };
    let token = request
        .admin_token
        .unwrap_or_else(|| connector.config.admin_token.clone());
    let store = connector.store.clone();
    let source_url = request.source.clone();
    // the source client speaks blocking HTTP; keep it off the async runtime
    let report = tokio::task::spawn_blocking(move || {
        let source = HttpSourceStore::new(&source_url, &token);
        store.federate_pull(&source)
    })
    .await;
    let report = match report {
        Ok(Ok(report)) => report,
        Ok(Err(e @ StoreError::SourceUnreachable(_))) => {
            return error_response(StatusCode::BAD_GATEWAY, "source unreachable", e.to_string())
        }
        Ok(Err(e)) => {
            return error_response(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
        }
        Err(e) => {
            return error_response(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
        }
    };
    connector.drain_changes();
    log_event(
        "federate",
        &[
            ("source", request.source),
            ("created", report.created.to_string()),
            ("updated", report.updated.to_string()),
            ("unchanged", report.unchanged.to_string()),
            ("conflicts", report.conflicts.to_string()),
        ],
    );
    Json(serde_json::to_value(report).unwrap()).into_response()
}

async fn admin_create_policy(
    State(connector): State<Arc<Connector>>,
    headers: HeaderMap,
    body: String,
) -> Response {
    if let Err(r) = check_admin(&connector, &headers) {
        return r;
    }
    connector.drain_changes();
    let doc: PolicyDocument = match serde_json::from_str(&body) {
        Ok(doc) => doc,
        Err(e) => return bad_request(e.to_string()),
    };
    let rules = match doc.rule_set() {
        Ok(rules) => rules,
        Err(e) => return bad_request(e.to_string()),
    };
    let assigner = doc
        .assigner
        .clone()
        .unwrap_or_else(|| connector.config.participant_id.clone());
    let result = connector.policies.create_policy(
        doc.kind,
        doc.target.clone(),
        assigner,
        rules,
        connector.facade.as_ref(),
    );
    match result {
        Ok(policy) => {
            log_event(
                "policy_created",
                &[("uid", policy.uid.clone()), ("target", policy.target.to_string())],
            );
            (StatusCode::CREATED, Json(AdminPolicyDoc::new(&policy))).into_response()
        }
        Err(e @ PolicyError::TargetNotFound(_)) => {
            error_response(StatusCode::NOT_FOUND, "target not found", e.to_string())
        }
        Err(e) => bad_request(e.to_string()),
    }
}

#[derive(Deserialize)]
struct PolicyListParams {
    target: String,
}

async fn admin_list_policies(
    State(connector): State<Arc<Connector>>,
    headers: HeaderMap,
    Query(params): Query<PolicyListParams>,
) -> Response {
    if let Err(r) = check_admin(&connector, &headers) {
        return r;
    }
    let target = match parse_urn(&params.target) {
        Ok(target) => target,
        Err(r) => return r,
    };
    let docs: Vec<AdminPolicyDoc> = connector
        .policies
        .list_by_target(&target)
        .iter()
        .map(AdminPolicyDoc::new)
        .collect();
    Json(docs).into_response()
}

async fn admin_store_domains(
    State(connector): State<Arc<Connector>>,
    headers: HeaderMap,
    Query(params): Query<PageParams>,
) -> Response {
    if let Err(r) = check_admin(&connector, &headers) {
        return r;
    }
    let page = match page_request(&connector, &params) {
        Ok(page) => page,
        Err(r) => return r,
    };
    Json(connector.store.list_domains(page)).into_response()
}

async fn admin_store_datasets(
    State(connector): State<Arc<Connector>>,
    headers: HeaderMap,
    Path(urn): Path<String>,
    Query(params): Query<PageParams>,
) -> Response {
    if let Err(r) = check_admin(&connector, &headers) {
        return r;
    }
    let (urn, page) = match (parse_urn(&urn), page_request(&connector, &params)) {
        (Ok(urn), Ok(page)) => (urn, page),
        (Err(r), _) | (_, Err(r)) => return r,
    };
    match connector.store.list_datasets_in_domain(&urn, page) {
        Ok(page) => Json(page).into_response(),
        Err(e @ StoreError::UnknownUrn(_)) => {
            error_response(StatusCode::NOT_FOUND, "unknown domain", e.to_string())
        }
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
    }
}

async fn admin_store_dataset_detail(
    State(connector): State<Arc<Connector>>,
    headers: HeaderMap,
    Path(urn): Path<String>,
) -> Response {
    if let Err(r) = check_admin(&connector, &headers) {
        return r;
    }
    let urn = match parse_urn(&urn) {
        Ok(urn) => urn,
        Err(r) => return r,
    };
    match connector.store.get_dataset_detail(&urn) {
        Ok(detail) => Json(detail).into_response(),
        Err(e @ (StoreError::UnknownUrn(_) | StoreError::DeletedEntity(_))) => {
            error_response(StatusCode::NOT_FOUND, "unknown dataset", e.to_string())
        }
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
    }
}

/// Soft-delete an entity. The DELETE event reaches the facade and the policy
/// engine before the response returns, so invalidation is observable
/// immediately afterwards.
async fn admin_delete_entity(
    State(connector): State<Arc<Connector>>,
    headers: HeaderMap,
    Path(urn): Path<String>,
) -> Response {
    if let Err(r) = check_admin(&connector, &headers) {
        return r;
    }
    let urn = match parse_urn(&urn) {
        Ok(urn) => urn,
        Err(r) => return r,
    };
    match connector.store.delete_entity(&urn) {
        Ok(()) => {
            connector.drain_changes();
            log_event("entity_deleted", &[("urn", urn.to_string())]);
            Json(json!({"deleted": urn.as_str()})).into_response()
        }
        Err(e @ StoreError::UnknownUrn(_)) => {
            error_response(StatusCode::NOT_FOUND, "unknown urn", e.to_string())
        }
        Err(e @ StoreError::AlreadyDeleted(_)) => {
            error_response(StatusCode::CONFLICT, "already deleted", e.to_string())
        }
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
    }
}

#[derive(Deserialize)]
struct SearchParams {
    q: String,
    offset: Option<usize>,
    limit: Option<usize>,
}

async fn admin_store_search(
    State(connector): State<Arc<Connector>>,
    headers: HeaderMap,
    Query(params): Query<SearchParams>,
) -> Response {
    if let Err(r) = check_admin(&connector, &headers) {
        return r;
    }
    let page = match page_request(
        &connector,
        &PageParams {
            offset: params.offset,
            limit: params.limit,
        },
    ) {
        Ok(page) => page,
        Err(r) => return r,
    };
    match connector.store.search_datasets(&params.q, page) {
        Ok(page) => Json(page).into_response(),
        Err(e @ StoreError::EmptyQuery) => bad_request(e.to_string()),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
    }
}
