/**
 * WebXR session entry. Kept behind small structural interfaces so the state
 * machine is testable without a headset or a real renderer: anything with
 * isSessionSupported/requestSession can stand in for navigator.xr.
 *
 * No scaling is applied anywhere, and the cloud coordinates are meters, so
 * a session views the scene at world scale.
 */

export interface VrSessionLike {
  end(): Promise<void> | void;
  addEventListener(type: "end", listener: () => void): void;
}

export interface VrSystemLike {
  isSessionSupported(mode: string): Promise<boolean>;
  requestSession(mode: string, options?: object): Promise<VrSessionLike>;
}

export interface VrRendererLike {
  xr: {
    enabled: boolean;
    setSession(session: VrSessionLike): Promise<void> | void;
  };
}

/** The user or the device turned the session request down. */
export class SessionDenied extends Error {
  constructor(reason: string) {
    super(reason);
    this.name = "SessionDenied";
  }
}

export interface VrButtonOptions {
  /** VR capability provider; pass null for "no capability". */
  xr?: VrSystemLike | null;
  doc?: Document;
  onStart?(session: VrSessionLike): void;
  /** session over, flat rendering continues with the camera untouched */
  onEnd?(): void;
  onDenied?(error: SessionDenied): void;
}

function defaultXr(): VrSystemLike | null {
  if (typeof navigator === "undefined") return null;
  return (navigator as Navigator & { xr?: VrSystemLike }).xr ?? null;
}

/**
 * Build the VR entry button and wire its session lifecycle. Without an
 * immersive-vr capability the button stays disabled and says so; with one it
 * toggles a session, falling back to flat rendering when the request is
 * denied or the session ends.
 */
export function createVrButton(
  renderer: VrRendererLike,
  options: VrButtonOptions = {}
): HTMLButtonElement {
  const doc = options.doc ?? document;
  const xr = options.xr !== undefined ? options.xr : defaultXr();

  const button = doc.createElement("button");
  button.className = "vr-button";

  const unavailable = () => {
    button.disabled = true;
    button.textContent = "VR not available";
  };

  if (!xr) {
    unavailable();
    return button;
  }

  let active: VrSessionLike | null = null;

  button.disabled = true;
  button.textContent = "VR";
  xr.isSessionSupported("immersive-vr").then((supported: boolean) => {
    if (supported) {
      button.disabled = false;
      button.textContent = "Enter VR";
    } else {
      unavailable();
    }
  }, unavailable);

  const onSessionEnd = () => {
    active = null;
    button.disabled = false;
    button.textContent = "Enter VR";
    options.onEnd?.();
  };

  button.addEventListener("click", () => {
    if (active) {
      void active.end();
      return;
    }
    button.disabled = true;
    xr.requestSession("immersive-vr", { optionalFeatures: ["local-floor"] })
      .then(async (session) => {
        session.addEventListener("end", onSessionEnd);
        renderer.xr.enabled = true;
        await renderer.xr.setSession(session);
        active = session;
        button.disabled = false;
        button.textContent = "Exit VR";
        options.onStart?.(session);
      })
      .catch((reason) => {
        button.disabled = false;
        button.textContent = "Enter VR";
        options.onDenied?.(
          new SessionDenied(reason instanceof Error ? reason.message : String(reason))
        );
      });
  });

  return button;
}
