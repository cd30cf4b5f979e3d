//! HTTP/JSON exploration API over a loaded bundle.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use svexplore_core::tree::{SearchHit, ROOT};
use svexplore_core::viz::{
    auto_transfer_function, render_composite_slice, render_gray_slice, render_overlap_preview, Bookmark,
    RenderMode, Rgb, Selection, TransferFunction1D, DEFAULT_PERSISTENCE_FRACTION, DIVERGING_PALETTE,
};
use svexplore_core::{Axis, FilterSpec, SearchQuery};

use crate::bundle::{preview_path, Bundle, BOOKMARKS};
use crate::error::{Error, Result};
use crate::io::{atomic_write, encode_png, rle_row};
use crate::store::Bookmarks;

type PreviewSlot = Arc<OnceLock<std::result::Result<Vec<u8>, String>>>;

pub struct Service {
    pub bundle: Bundle,
    bookmarks: tokio::sync::Mutex<Bookmarks>,
    previews: Mutex<HashMap<(u32, Axis), PreviewSlot>>,
}

pub type AppState = Arc<Service>;

impl Service {
    pub fn open(dir: &Path) -> Result<AppState> {
        let bundle = Bundle::load(dir)?;
        let bookmarks = Bookmarks::load(&dir.join(BOOKMARKS))?;
        Ok(Arc::new(Self {
            bundle,
            bookmarks: tokio::sync::Mutex::new(bookmarks),
            previews: Mutex::new(HashMap::new()),
        }))
    }

    fn bookmarks_path(&self) -> PathBuf {
        self.bundle.dir.join(BOOKMARKS)
    }

    /// PNG overlap preview, rendered once per node and axis and cached on disk.
    pub fn preview_png(&self, metacluster: u32, axis: Axis) -> std::result::Result<Vec<u8>, String> {
        let slot = {
            let mut cache = self.previews.lock().expect("preview cache poisoned");
            cache.entry((metacluster, axis)).or_default().clone()
        };
        slot.get_or_init(|| {
            let path = self.bundle.dir.join(preview_path(metacluster, axis));
            if let Ok(bytes) = std::fs::read(&path) {
                return Ok(bytes);
            }
            let mc = &self.bundle.metaclusters[metacluster as usize];
            let png = encode_png(&render_overlap_preview(mc, &self.bundle.labeling, axis)).map_err(|e| e.to_string())?;
            atomic_write(&path, &png).map_err(|e| e.to_string())?;
            Ok(png)
        })
        .clone()
    }
}

#[derive(Debug)]
pub struct ApiError(pub StatusCode, pub String);

impl ApiError {
    fn bad(msg: impl Into<String>) -> Self {
        Self(StatusCode::BAD_REQUEST, msg.into())
    }

    fn not_found(msg: impl Into<String>) -> Self {
        Self(StatusCode::NOT_FOUND, msg.into())
    }
}

impl From<svexplore_core::Error> for ApiError {
    fn from(e: svexplore_core::Error) -> Self {
        match e {
            svexplore_core::Error::UnknownId { .. } => Self::not_found(e.to_string()),
            _ => Self::bad(e.to_string()),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/meta", get(meta))
        .route("/api/slice/{axis}/{index}", get(slice))
        .route("/api/tree", get(tree))
        .route("/api/node/{instance}", get(node))
        .route("/api/node/{instance}/preview.png", get(preview))
        .route("/api/node/{instance}/transfer-function", get(node_tf))
        .route("/api/region/{id}/mask/{axis}/{index}", get(region_mask))
        .route("/api/search", post(search))
        .route("/api/containing", post(containing))
        .route("/api/bookmarks", get(list_bookmarks).post(create_bookmark))
        .route(
            "/api/bookmarks/{id}",
            get(get_bookmark).put(update_bookmark).delete(delete_bookmark),
        )
        .route("/api/composite/{axis}/{index}", get(composite))
        .with_state(state)
}

/// Loads the bundle, binds `addr` and serves until the process ends.
pub async fn serve(dir: &Path, addr: SocketAddr) -> Result<()> {
    let state = Service::open(dir)?;
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|source| Error::Io {
        path: PathBuf::from(addr.to_string()),
        source,
    })?;
    axum::serve(listener, router(state)).await.map_err(|source| Error::Io {
        path: PathBuf::from(addr.to_string()),
        source,
    })
}

fn parse_axis(s: &str) -> ApiResult<Axis> {
    Axis::parse(s).ok_or_else(|| ApiError::bad(format!("unknown axis `{s}`")))
}

fn parse_window(s: Option<&str>, default: [f64; 2]) -> ApiResult<[f64; 2]> {
    let Some(s) = s else {
        return Ok(default);
    };
    let parts: Vec<&str> = s.split(',').collect();
    let nums: Option<Vec<f64>> = parts.iter().map(|p| p.trim().parse().ok()).collect();
    match nums.as_deref() {
        Some(&[lo, hi]) if lo.is_finite() && hi.is_finite() => Ok([lo, hi]),
        _ => Err(ApiError::bad(format!("window must be `lo,hi`, got `{s}`"))),
    }
}

fn png_response(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn meta(State(s): State<AppState>) -> Json<serde_json::Value> {
    let b = &s.bundle;
    Json(serde_json::json!({
        "dims": b.volume.meta.dims,
        "spacing": b.volume.meta.spacing,
        "dtype": b.volume.meta.dtype,
        "scalar_range": b.volume.meta.scalar_range,
        "supervoxel_count": b.labeling.count(),
        "interval_count": b.clusterings.len(),
        "region_count": b.catalog.len(),
        "metacluster_count": b.metaclusters.len(),
        "node_count": b.tree.nodes.len(),
        "manifest": b.manifest,
    }))
}

#[derive(Deserialize)]
struct WindowQuery {
    window: Option<String>,
}

async fn slice(
    State(s): State<AppState>,
    UrlPath((axis, index)): UrlPath<(String, usize)>,
    Query(q): Query<WindowQuery>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let axis = parse_axis(&axis)?;
    let vol = &s.bundle.volume;
    let raw = headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("application/octet-stream"));
    if raw {
        let sl = vol.slice(axis, index)?;
        let bytes: Vec<u8> = sl.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        return Ok((
            [
                (header::CONTENT_TYPE, "application/octet-stream".to_string()),
                (header::HeaderName::from_static("x-slice-width"), sl.width.to_string()),
                (header::HeaderName::from_static("x-slice-height"), sl.height.to_string()),
            ],
            bytes,
        )
            .into_response());
    }
    let window = parse_window(q.window.as_deref(), vol.meta.scalar_range)?;
    let img = render_gray_slice(vol, axis, index, window)?;
    Ok(png_response(encode_png(&img)?))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct TreeQuery {
    min_size: Option<u64>,
    max_branch: Option<usize>,
}

#[derive(Serialize)]
struct TreeNodeOut {
    instance_id: u32,
    metacluster_id: Option<u32>,
    parent_instance: Option<u32>,
    children: Vec<u32>,
    footprint_voxel_size: u64,
    is_duplicate: bool,
    canonical_instance: u32,
}

async fn tree(State(s): State<AppState>, Query(q): Query<TreeQuery>) -> Json<serde_json::Value> {
    let spec = FilterSpec {
        min_voxel_size: q.min_size.unwrap_or(0),
        max_branching: q.max_branch,
    };
    let view = s.bundle.tree.filter_tree(&spec);
    let nodes: Vec<TreeNodeOut> = view
        .instances()
        .into_iter()
        .map(|i| {
            let n = &s.bundle.tree.nodes[i as usize];
            TreeNodeOut {
                instance_id: n.instance_id,
                metacluster_id: n.metacluster_id,
                parent_instance: n.parent_instance,
                children: view.children(i).collect(),
                footprint_voxel_size: n.footprint_voxel_size,
                is_duplicate: n.is_duplicate,
                canonical_instance: n.canonical_instance,
            }
        })
        .collect();
    Json(serde_json::json!({
        "filter": { "minSize": spec.min_voxel_size, "maxBranch": spec.max_branching },
        "nodes": nodes,
    }))
}

#[derive(Serialize)]
struct MemberOut {
    region_id: u32,
    voxel_size: u64,
    supervoxel_count: usize,
    /// `[k_start, k_end]` per producing interval; `null` end is unbounded.
    k_intervals: Vec<(f64, Option<f64>)>,
}

async fn node(State(s): State<AppState>, UrlPath(instance): UrlPath<u32>) -> ApiResult<Json<serde_json::Value>> {
    let b = &s.bundle;
    let n = b
        .tree
        .node(instance)
        .ok_or_else(|| ApiError::not_found(format!("unknown instance {instance}")))?;
    let (members, max_overlap, previews) = match n.metacluster_id {
        None => (Vec::new(), 0, Vec::new()),
        Some(m) => {
            let mc = &b.metaclusters[m as usize];
            let members = mc
                .members
                .iter()
                .map(|&r| {
                    let reg = &b.catalog.regions[r as usize];
                    MemberOut {
                        region_id: r,
                        voxel_size: reg.voxel_size,
                        supervoxel_count: reg.supervoxels.len(),
                        k_intervals: reg
                            .intervals
                            .iter()
                            .map(|&i| {
                                let c = &b.clusterings[i as usize];
                                (c.k_start, c.k_end.is_finite().then_some(c.k_end))
                            })
                            .collect(),
                    }
                })
                .collect();
            let previews: Vec<String> = ["x", "y", "z"]
                .iter()
                .map(|a| format!("/api/node/{instance}/preview.png?axis={a}"))
                .collect();
            (members, mc.max_overlap(), previews)
        }
    };
    Ok(Json(serde_json::json!({
        "node": n,
        "members": members,
        "max_overlap": max_overlap,
        "previews": previews,
    })))
}

#[derive(Deserialize)]
struct AxisQuery {
    axis: Option<String>,
}

fn node_metacluster(s: &Service, instance: u32) -> ApiResult<u32> {
    let n = s
        .bundle
        .tree
        .node(instance)
        .ok_or_else(|| ApiError::not_found(format!("unknown instance {instance}")))?;
    n.metacluster_id
        .ok_or_else(|| ApiError::not_found("the root has no meta-cluster"))
}

async fn preview(
    State(s): State<AppState>,
    UrlPath(instance): UrlPath<u32>,
    Query(q): Query<AxisQuery>,
) -> ApiResult<Response> {
    let axis = parse_axis(q.axis.as_deref().unwrap_or("z"))?;
    let m = node_metacluster(&s, instance)?;
    let state = s.clone();
    let png = tokio::task::spawn_blocking(move || state.preview_png(m, axis))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e))?;
    Ok(png_response(png))
}

async fn node_tf(State(s): State<AppState>, UrlPath(instance): UrlPath<u32>) -> ApiResult<Json<TransferFunction1D>> {
    let m = node_metacluster(&s, instance)?;
    let b = &s.bundle;
    let tf = auto_transfer_function(
        &b.volume,
        &b.labeling,
        &b.metaclusters[m as usize].footprint,
        DIVERGING_PALETTE.len(),
        DEFAULT_PERSISTENCE_FRACTION,
    )?;
    Ok(Json(tf))
}

async fn region_mask(
    State(s): State<AppState>,
    UrlPath((id, axis, index)): UrlPath<(u32, String, usize)>,
) -> ApiResult<Json<serde_json::Value>> {
    let axis = parse_axis(&axis)?;
    let b = &s.bundle;
    let region = b
        .catalog
        .regions
        .get(id as usize)
        .ok_or_else(|| ApiError::not_found(format!("unknown region {id}")))?;
    let dims = b.labeling.dims;
    if index >= dims[axis.index()] {
        return Err(ApiError::bad(format!("slice index {index} out of range")));
    }
    let mut inside = vec![false; b.labeling.count()];
    for &sv in &region.supervoxels {
        inside[sv as usize] = true;
    }
    let (ca, ra) = axis.plane_axes();
    let (w, h) = (dims[ca], dims[ra]);
    let rows: Vec<Vec<(u32, u32)>> = (0..h)
        .map(|row| {
            rle_row((0..w).map(|col| {
                let mut p = [0usize; 3];
                p[axis.index()] = index;
                p[ca] = col;
                p[ra] = row;
                inside[b.labeling.label_at(p) as usize]
            }))
        })
        .collect();
    Ok(Json(serde_json::json!({ "width": w, "height": h, "rows": rows })))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchRequest {
    pub voxels: Vec<[i64; 3]>,
    pub min: u64,
    pub max: u64,
}

async fn search(State(s): State<AppState>, Json(req): Json<SearchRequest>) -> ApiResult<Json<serde_json::Value>> {
    let q = SearchQuery {
        brushed_voxels: req.voxels,
        min_size: req.min,
        max_size: req.max,
    };
    let hits: Vec<SearchHit> = s.bundle.tree.search_nodes(&s.bundle.labeling, &q)?;
    Ok(Json(serde_json::json!({ "hits": hits })))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContainingRequest {
    pub voxels: Vec<[i64; 3]>,
}

async fn containing(
    State(s): State<AppState>,
    Json(req): Json<ContainingRequest>,
) -> ApiResult<Json<serde_json::Value>> {
    let inst = s.bundle.tree.containing_node(&s.bundle.labeling, &req.voxels)?;
    let n = &s.bundle.tree.nodes[inst as usize];
    Ok(Json(serde_json::json!({
        "instance_id": inst,
        "metacluster_id": n.metacluster_id,
        "is_root": inst == ROOT,
    })))
}

/// Bookmark fields supplied by clients; the id comes from the URL or store.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BookmarkBody {
    pub name: String,
    pub selections: Vec<Selection>,
    #[serde(default)]
    pub render_mode: RenderMode,
    pub color: Rgb,
    pub opacity: f64,
    #[serde(default)]
    pub transfer_function: Option<TransferFunction1D>,
}

/// Validates `body` against the bundle, filling in an automatic transfer
/// function for `tf1d` bookmarks that have none.
fn checked_bookmark(s: &Service, id: u32, body: BookmarkBody) -> ApiResult<Bookmark> {
    let b = &s.bundle;
    if body.selections.is_empty() {
        return Err(ApiError::bad("bookmark needs at least one selection"));
    }
    let mut bm = Bookmark {
        id,
        name: body.name,
        selections: body.selections,
        render_mode: body.render_mode,
        color: body.color,
        opacity: body.opacity,
        transfer_function: body.transfer_function,
    };
    if bm.render_mode == RenderMode::Tf1d && bm.transfer_function.is_none() {
        let svs = bm.supervoxels(&b.tree, &b.metaclusters, &b.catalog)?;
        bm.transfer_function = Some(auto_transfer_function(
            &b.volume,
            &b.labeling,
            &svs,
            DIVERGING_PALETTE.len(),
            DEFAULT_PERSISTENCE_FRACTION,
        )?);
    }
    bm.resolve(&b.tree, &b.metaclusters, &b.catalog)?;
    Ok(bm)
}

async fn list_bookmarks(State(s): State<AppState>) -> Json<Vec<Bookmark>> {
    Json(s.bookmarks.lock().await.items.clone())
}

async fn get_bookmark(State(s): State<AppState>, UrlPath(id): UrlPath<u32>) -> ApiResult<Json<Bookmark>> {
    let store = s.bookmarks.lock().await;
    store
        .get(id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("unknown bookmark {id}")))
}

async fn create_bookmark(
    State(s): State<AppState>,
    Json(body): Json<BookmarkBody>,
) -> ApiResult<(StatusCode, Json<Bookmark>)> {
    let mut store = s.bookmarks.lock().await;
    let bm = checked_bookmark(&s, store.next_id(), body)?;
    let mut next = store.clone();
    next.create(bm.clone());
    next.save(&s.bookmarks_path())?;
    *store = next;
    Ok((StatusCode::CREATED, Json(bm)))
}

async fn update_bookmark(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<u32>,
    Json(body): Json<BookmarkBody>,
) -> ApiResult<Json<Bookmark>> {
    let mut store = s.bookmarks.lock().await;
    if store.get(id).is_none() {
        return Err(ApiError::not_found(format!("unknown bookmark {id}")));
    }
    let bm = checked_bookmark(&s, id, body)?;
    let mut next = store.clone();
    next.update(id, bm.clone());
    next.save(&s.bookmarks_path())?;
    *store = next;
    Ok(Json(bm))
}

async fn delete_bookmark(State(s): State<AppState>, UrlPath(id): UrlPath<u32>) -> ApiResult<StatusCode> {
    let mut store = s.bookmarks.lock().await;
    let mut next = store.clone();
    if !next.delete(id) {
        return Err(ApiError::not_found(format!("unknown bookmark {id}")));
    }
    next.save(&s.bookmarks_path())?;
    *store = next;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
struct CompositeQuery {
    bookmarks: Option<String>,
    window: Option<String>,
}

async fn composite(
    State(s): State<AppState>,
    UrlPath((axis, index)): UrlPath<(String, usize)>,
    Query(q): Query<CompositeQuery>,
) -> ApiResult<Response> {
    let axis = parse_axis(&axis)?;
    let b = &s.bundle;
    let window = parse_window(q.window.as_deref(), b.volume.meta.scalar_range)?;
    let ids: Vec<u32> = match q.bookmarks.as_deref().map(str::trim) {
        None | Some("") => Vec::new(),
        Some(list) => list
            .split(',')
            .map(|t| t.trim().parse().map_err(|_| ApiError::bad(format!("bad bookmark id `{t}`"))))
            .collect::<ApiResult<_>>()?,
    };
    let layers = {
        let store = s.bookmarks.lock().await;
        ids.iter()
            .map(|&id| {
                store
                    .get(id)
                    .ok_or_else(|| ApiError::not_found(format!("unknown bookmark {id}")))?
                    .resolve(&b.tree, &b.metaclusters, &b.catalog)
                    .map_err(ApiError::from)
            })
            .collect::<ApiResult<Vec<_>>>()?
    };
    let img = render_composite_slice(&b.volume, &b.labeling, &layers, axis, index, window)?;
    Ok(png_response(encode_png(&img)?))
}

