export {
  RemoteDeviceFile,
  UpmClientError,
  defaultAddress,
  openDevice,
  withDevice,
} from "./client.js";
export type { Frame } from "./framing.js";
export {
  FrameDecoder,
  FrameKind,
  ProtocolFault,
  crc32,
  decodeFrame,
  encodeFrame,
} from "./framing.js";
