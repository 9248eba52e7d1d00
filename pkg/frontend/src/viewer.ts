import * as THREE from "three";

import { SceneMessage, Vec3 } from "./protocol.js";
import { Axis, PickingPlane, Ray } from "./picking.js";

/**
 * Three.js scene assembly. The anatomy stays a voxel point/box cloud and
 * the backbone a polyline tube; nothing is meshed or smoothed, so what
 * the operator sees is exactly what the planner checked against.
 */
export class OperatorView {
  readonly scene = new THREE.Scene();
  readonly camera: THREE.PerspectiveCamera;
  private backbone: THREE.Line | null = null;
  private marker: THREE.Mesh;
  private planeHelper: THREE.Mesh | null = null;

  constructor(aspect: number) {
    this.camera = new THREE.PerspectiveCamera(50, aspect, 1, 2000);
    this.camera.position.set(0, -260, 60);
    this.camera.up.set(0, 0, 1);
    this.camera.lookAt(0, 0, 60);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.9));
    this.marker = new THREE.Mesh(
      new THREE.SphereGeometry(1.5, 12, 12),
      new THREE.MeshBasicMaterial({ color: 0xffaa00 }),
    );
    this.marker.visible = false;
    this.scene.add(this.marker);
  }

  loadScene(msg: SceneMessage) {
    const sp = msg.spacing_mm;
    const o = msg.origin_mm;
    const pos = new Float32Array(msg.surface_voxels.length * 3);
    msg.surface_voxels.forEach((v, i) => {
      pos[3 * i] = o[0] + (v[0] + 0.5) * sp[0];
      pos[3 * i + 1] = o[1] + (v[1] + 0.5) * sp[1];
      pos[3 * i + 2] = o[2] + (v[2] + 0.5) * sp[2];
    });
    const geo = new THREE.BufferGeometry();
    geo.setAttribute("position", new THREE.BufferAttribute(pos, 3));
    const cloud = new THREE.Points(
      geo,
      new THREE.PointsMaterial({ color: 0x8899aa, size: Math.min(...sp) }),
    );
    this.scene.add(cloud);

    const box = msg.workspace_box_mm;
    const size: Vec3 = [
      box.max[0] - box.min[0],
      box.max[1] - box.min[1],
      box.max[2] - box.min[2],
    ];
    const helper = new THREE.Mesh(
      new THREE.BoxGeometry(...size),
      new THREE.MeshBasicMaterial({ wireframe: true, color: 0x446644 }),
    );
    helper.position.set(
      (box.min[0] + box.max[0]) / 2,
      (box.min[1] + box.max[1]) / 2,
      (box.min[2] + box.max[2]) / 2,
    );
    this.scene.add(helper);
  }

  showBackbone(points: Vec3[]) {
    if (this.backbone) this.scene.remove(this.backbone);
    const geo = new THREE.BufferGeometry().setFromPoints(
      points.map((p) => new THREE.Vector3(...p)),
    );
    this.backbone = new THREE.Line(
      geo,
      new THREE.LineBasicMaterial({ color: 0xee3344 }),
    );
    this.scene.add(this.backbone);
  }

  showMarker(p: Vec3, rejected = false) {
    this.marker.position.set(...p);
    (this.marker.material as THREE.MeshBasicMaterial).color.set(
      rejected ? 0xdd2222 : 0xffaa00,
    );
    this.marker.visible = true;
  }

  showPickingPlane(plane: PickingPlane, extent = 160) {
    if (this.planeHelper) this.scene.remove(this.planeHelper);
    const geo = new THREE.PlaneGeometry(extent, extent);
    const mesh = new THREE.Mesh(
      geo,
      new THREE.MeshBasicMaterial({
        color: 0x3355aa,
        transparent: true,
        opacity: 0.15,
        side: THREE.DoubleSide,
      }),
    );
    const pos: Vec3 = [0, 0, 0];
    pos[plane.axis] = plane.value;
    mesh.position.set(...pos);
    const axes: Record<Axis, Vec3> = {
      0: [0, 1, 0],
      1: [1, 0, 0],
      2: [0, 0, 0],
    };
    const rot = axes[plane.axis];
    mesh.rotation.set(
      (rot[0] * Math.PI) / 2,
      (rot[1] * Math.PI) / 2,
      0,
    );
    this.planeHelper = mesh;
    this.scene.add(mesh);
  }

  /** World ray through normalized device coordinates (-1..1). */
  rayFromNdc(ndcX: number, ndcY: number): Ray {
    const rc = new THREE.Raycaster();
    rc.setFromCamera(new THREE.Vector2(ndcX, ndcY), this.camera);
    return {
      origin: rc.ray.origin.toArray() as Vec3,
      dir: rc.ray.direction.toArray() as Vec3,
    };
  }
}
