// Shared types for the editor. All geometry is in pixel units of the label
// grid, origin top-left, (row, col) order to match the service.

export interface ControlPoint {
  anchor: [number, number];        // (row, col)
  displacement: [number, number];  // (drow, dcol)
}

export interface RetrieveResult {
  record_id: string;
  distance: number;
  map_path: string;
}

export interface TransformResponse {
  image_png: string;        // base64 PNG
  fake_labels_png: string;  // base64 PNG
  component_counts: Record<string, number>;
}

export interface EditResponse {
  labels_png: string;
  component_counts: Record<string, number>;
}

export interface GalleryResponse {
  record_id: string;
  map_path: string;
  labels_png: string;
}

export interface ServiceError {
  code: string;
  message: string;
}

export interface Preview {
  imagePng: string;
  labelsPng: string;
  counts: Record<string, number>;
}
