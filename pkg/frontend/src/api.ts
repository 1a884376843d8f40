/** Typed client for the annotation service HTTP API. */

import type { ClusterGroup, GridPayload, LabelRecord, PatchContext } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function errorDetail(resp: Response): Promise<string> {
  try {
    const body = await resp.json();
    return typeof body.detail === "string" ? body.detail : JSON.stringify(body);
  } catch {
    return resp.statusText;
  }
}

export async function fetchClusters(perCluster = 8): Promise<ClusterGroup[]> {
  const resp = await fetch(`/api/clusters?per_cluster=${perCluster}`);
  if (!resp.ok) throw new ApiError(resp.status, await errorDetail(resp));
  const body = await resp.json();
  return body.clusters as ClusterGroup[];
}

export async function fetchGrid(patchId: string, k: number): Promise<GridPayload> {
  const resp = await fetch(`/api/grid?patch=${encodeURIComponent(patchId)}&k=${k}`);
  if (!resp.ok) throw new ApiError(resp.status, await errorDetail(resp));
  return (await resp.json()) as GridPayload;
}

export async function postLabel(
  patchId: string,
  taxonomyCode: string,
  classId: number | null,
  freeText: string | null,
): Promise<LabelRecord> {
  const resp = await fetch("/api/labels", {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({
      patch_id: patchId,
      taxonomy_code: taxonomyCode,
      class_id: classId,
      free_text: freeText,
    }),
  });
  if (!resp.ok) throw new ApiError(resp.status, await errorDetail(resp));
  return (await resp.json()) as LabelRecord;
}

/** The context endpoint ships the source image bytes with the patch
 *  rectangle in response headers. */
export async function fetchContext(patchId: string): Promise<PatchContext> {
  const resp = await fetch(`/api/patch/${encodeURIComponent(patchId)}/context`);
  if (!resp.ok) throw new ApiError(resp.status, await errorDetail(resp));
  const blob = await resp.blob();
  return {
    imageUrl: URL.createObjectURL(blob),
    x: Number(resp.headers.get("X-Patch-X") ?? 0),
    y: Number(resp.headers.get("X-Patch-Y") ?? 0),
    side: Number(resp.headers.get("X-Patch-Side") ?? 0),
    imageId: resp.headers.get("X-Image-Id") ?? "",
  };
}
