import type {
  NegotiationActionName,
  NegotiationViewJson,
  PreviewCardJson,
  RouteJson,
} from "./api.js";

// Slide layout order is part of the contract: pictures lead, words follow.
export const SLIDE_SECTIONS = ["photos", "instruction", "decision"] as const;

export interface Slide {
  poiId: string;
  kind: string;
  decided: string | null; // "confirmed" | "rejected" | null while pending
  photos: string[]; // selected primary first once one is chosen
  selectedPhoto: string | null;
  flaggedPhotos: string[];
  instruction: string;
  instructionApproved: boolean;
  annotations: string[];
  sections: typeof SLIDE_SECTIONS;
  isCurrent: boolean;
}

export interface StepRequest {
  path: string;
  body: { action: NegotiationActionName; ts_ms: number; detail?: string };
}

export interface FinalizeControl {
  path: string;
  enabled: boolean;
  reason: string | null;
}

export interface SlideshowView {
  negotiationId: string;
  routeId: string;
  cursor: number;
  slides: Slide[];
  current: Slide;
  /** Shown verbatim by the preview toggle; byte for byte what the trainee app gets. */
  previewCard: PreviewCardJson;
  finalize: FinalizeControl;
}

export function stepRequest(
  routeId: string,
  action: NegotiationActionName,
  tsMs: number,
  detail?: string,
): StepRequest {
  const body: StepRequest["body"] = { action, ts_ms: tsMs };
  if (detail !== undefined) body.detail = detail;
  return { path: `/negotiations/${routeId}/step`, body };
}

/**
 * One POI per screen. The negotiation view carries the per-POI decision
 * state; photos and instructions come from the route being negotiated,
 * which the trainer already holds from curation.
 */
export function buildSlideshow(view: NegotiationViewJson, route: RouteJson): SlideshowView {
  const slides = view.records.map((record, i): Slide => {
    const poi = route.pois.find((p) => p.id === record.poi_id);
    if (!poi) throw new Error(`route ${route.id} does not carry POI ${record.poi_id}`);
    let photos = [...poi.photos];
    if (record.selected_photo !== null) {
      photos = [record.selected_photo, ...photos.filter((ph) => ph !== record.selected_photo)];
    }
    return {
      poiId: record.poi_id,
      kind: poi.kind,
      decided: record.decided,
      photos,
      selectedPhoto: record.selected_photo,
      flaggedPhotos: [...record.flagged_photos],
      instruction: poi.instruction,
      instructionApproved: record.instruction_approved,
      annotations: [...record.annotations],
      sections: SLIDE_SECTIONS,
      isCurrent: i === view.cursor,
    };
  });

  const current = slides[view.cursor];
  if (!current) throw new Error(`cursor ${view.cursor} outside the slideshow`);

  const undecided = view.records.filter((r) => r.decided === null).map((r) => r.poi_id);
  const confirmedLandmark = slides.some((s) => s.kind === "landmark" && s.decided === "confirmed");
  let reason: string | null = null;
  if (undecided.length > 0) {
    reason = `waiting on ${undecided.join(", ")}`;
  } else if (!confirmedLandmark) {
    reason = "no confirmed landmark";
  }

  return {
    negotiationId: view.id,
    routeId: view.route_id,
    cursor: view.cursor,
    slides,
    current,
    previewCard: view.current,
    finalize: {
      path: `/negotiations/${view.route_id}/finalize`,
      enabled: reason === null,
      reason,
    },
  };
}
