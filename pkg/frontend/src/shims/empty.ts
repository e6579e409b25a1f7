// Build shim: @tensorflow-models/pose-detection statically references the
// optional @mediapipe/pose runtime, which this app never uses (MoveNet on
// tfjs only). The stub satisfies the named import so the dead branch
// bundles without pulling in mediapipe; instantiating it would be a bug.
export class Pose {
  constructor() {
    throw new Error('mediapipe runtime is not bundled; use the MoveNet runtime')
  }
}

export default { Pose }
