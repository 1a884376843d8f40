/** Wire types mirroring the annotation service JSON bodies. */

export interface LabelRecord {
  patch_id: string;
  taxonomy_code: string;
  class_id: number | null;
  free_text: string | null;
  annotator: string;
  timestamp: number;
}

export interface PatchDescriptor {
  patch_id: string;
  image_id: string;
  x: number;
  y: number;
  side: number;
  sol: number;
  site: number;
  drive: number;
  eye: string;
  split: string;
  image_url: string;
  label: LabelRecord | null;
}

export interface GridNeighbor extends PatchDescriptor {
  distance: number;
  same_site_drive: boolean;
}

export interface GridPayload {
  query: PatchDescriptor;
  k: number;
  neighbors: GridNeighbor[];
}

export interface ClusterGroup {
  cluster: number;
  members: string[];
}

export interface PatchContext {
  imageUrl: string;
  x: number;
  y: number;
  side: number;
  imageId: string;
}
