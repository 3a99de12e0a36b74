/**
 * Remote device files over a served upm runtime.
 *
 * A RemoteDeviceFile mirrors the runtime's file semantics one-for-one:
 * message-oriented write/read, submission-order reads, flush that does
 * not consume, idempotent close.  Errors carry the runtime's variant
 * names (DEVICE_CLOSED, TIMEOUT, BACKEND_FAILURE, ...).
 */

import { Socket, createConnection } from "net";
import { Frame, FrameDecoder, FrameKind, encodeFrame } from "./framing.js";

// Older runtimes lack the disposal symbols; install them so `await using`
// transpilations and manual dispose calls both work.
(Symbol as { asyncDispose?: symbol }).asyncDispose ??= Symbol.for("Symbol.asyncDispose");

export class UpmClientError extends Error {
  constructor(readonly variant: string, readonly detail: string = "") {
    super(detail ? `${variant}: ${detail}` : variant);
    this.name = "UpmClientError";
  }
}

function errorFromPayload(payload: Buffer): UpmClientError {
  const text = payload.toString("utf-8");
  const space = text.indexOf(" ");
  return space < 0
    ? new UpmClientError(text)
    : new UpmClientError(text.slice(0, space), text.slice(space + 1));
}

type JobOutcome = { payload?: Buffer; error?: UpmClientError };
type Waiter = { resolve: (o: JobOutcome) => void; timer?: NodeJS.Timeout };

function parseAddress(address: string): { host: string; port: number } {
  const cut = address.lastIndexOf(":");
  const port = Number(address.slice(cut + 1));
  if (cut < 1 || !Number.isInteger(port)) {
    throw new UpmClientError("PROTOCOL_ERROR", `address ${address}`);
  }
  return { host: address.slice(0, cut), port };
}

export function defaultAddress(): string {
  return process.env.UPM_SERVE_ADDR ?? "127.0.0.1:7707";
}

class Connection {
  private decoder = new FrameDecoder();
  private controlWaiters: Array<(f: Frame) => void> = [];
  private fault: Error | null = null;
  readonly jobFrames: Frame[] = [];
  onJobFrame: (() => void) | null = null;

  private constructor(private socket: Socket) {}

  static async open(address: string): Promise<Connection> {
    const { host, port } = parseAddress(address);
    const socket = createConnection({ host, port, noDelay: true });
    await new Promise<void>((resolve, reject) => {
      socket.once("connect", () => resolve());
      socket.once("error", (e) => reject(new UpmClientError("PROTOCOL_ERROR", String(e))));
    });
    const connection = new Connection(socket);
    socket.on("data", (chunk) => connection.dispatch(chunk));
    socket.on("error", (e) => connection.fail(new UpmClientError("PROTOCOL_ERROR", String(e))));
    socket.on("close", () => connection.fail(new UpmClientError("DEVICE_CLOSED", "connection lost")));
    const hello = connection.awaitControlFrame();
    connection.send({ kind: FrameKind.HELLO, jobId: 0, deviceId: "", payload: Buffer.from("upm-client-ts") });
    const reply = await hello;
    if (reply.kind !== FrameKind.HELLO) {
      connection.destroy();
      throw new UpmClientError("PROTOCOL_ERROR", "handshake");
    }
    return connection;
  }

  private dispatch(chunk: Buffer): void {
    let frames: Frame[];
    try {
      frames = this.decoder.push(chunk);
    } catch (e) {
      this.fail(new UpmClientError("PROTOCOL_ERROR", String(e)));
      this.destroy();
      return;
    }
    for (const frame of frames) {
      const jobLevel = frame.jobId > 0 &&
        (frame.kind === FrameKind.RESPONSE || frame.kind === FrameKind.ERROR);
      if (jobLevel) {
        this.jobFrames.push(frame);
        this.onJobFrame?.();
      } else {
        this.controlWaiters.shift()?.(frame);
      }
    }
  }

  private fail(error: Error): void {
    if (this.fault) return;
    this.fault = error;
    this.onJobFrame?.();
    for (const waiter of this.controlWaiters.splice(0)) {
      waiter({ kind: FrameKind.ERROR, jobId: 0, deviceId: "", payload: Buffer.from(String(error)) });
    }
  }

  get faulted(): Error | null {
    return this.fault;
  }

  send(frame: Frame): void {
    if (this.fault) throw this.fault;
    this.socket.write(encodeFrame(frame));
  }

  awaitControlFrame(): Promise<Frame> {
    return new Promise((resolve) => this.controlWaiters.push(resolve));
  }

  async control(deviceId: string, command: string): Promise<Frame> {
    const reply = this.awaitControlFrame();
    this.send({ kind: FrameKind.CONTROL, jobId: 0, deviceId, payload: Buffer.from(command) });
    const frame = await reply;
    if (frame.kind === FrameKind.ERROR) throw errorFromPayload(frame.payload);
    return frame;
  }

  sayGoodbye(): void {
    try {
      this.send({ kind: FrameKind.BYE, jobId: 0, deviceId: "", payload: Buffer.alloc(0) });
    } catch {
      // connection already gone; close is best-effort
    }
  }

  destroy(): void {
    this.socket.destroy();
  }
}

export class RemoteDeviceFile {
  private open = true;
  private nextJobId = 1;
  private results: JobOutcome[] = [];
  private waiters: Waiter[] = [];
  private pendingJobs = 0;

  private constructor(private connection: Connection, readonly deviceName: string) {
    connection.onJobFrame = () => this.drainJobFrames();
  }

  /** Open `upm://<name>` on a served runtime at host:port. */
  static async open(path: string, address: string = defaultAddress()): Promise<RemoteDeviceFile> {
    const match = /^upm:\/\/([^/?#]+)(\?.*)?$/.exec(path);
    if (!match) throw new UpmClientError("PROTOCOL_ERROR", `path ${path}`);
    const connection = await Connection.open(address);
    try {
      await connection.control("", `open ${path}`);
    } catch (e) {
      connection.destroy();
      throw e;
    }
    return new RemoteDeviceFile(connection, match[1]);
  }

  private drainJobFrames(): void {
    for (const frame of this.connection.jobFrames.splice(0)) {
      const outcome: JobOutcome =
        frame.kind === FrameKind.RESPONSE
          ? { payload: frame.payload }
          : { error: errorFromPayload(frame.payload) };
      const waiter = this.waiters.shift();
      if (waiter) {
        if (waiter.timer) clearTimeout(waiter.timer);
        waiter.resolve(outcome);
      } else {
        this.results.push(outcome);
      }
    }
    const fault = this.connection.faulted;
    if (fault && this.open) {
      for (const waiter of this.waiters.splice(0)) {
        if (waiter.timer) clearTimeout(waiter.timer);
        waiter.resolve({ error: fault as UpmClientError });
      }
    }
  }

  private checkOpen(): void {
    if (!this.open) throw new UpmClientError("DEVICE_CLOSED", this.deviceName);
  }

  /** Submit one whole job; resolves to its job id without waiting. */
  async write(payload: Uint8Array): Promise<number> {
    this.checkOpen();
    const jobId = this.nextJobId++;
    this.connection.send({
      kind: FrameKind.REQUEST,
      jobId,
      deviceId: this.deviceName,
      payload: Buffer.from(payload),
    });
    this.pendingJobs++;
    return jobId;
  }

  /** Take the oldest job's whole result, in submission order. */
  async read(timeoutMs?: number): Promise<Buffer> {
    this.checkOpen();
    if (this.pendingJobs === 0) throw new UpmClientError("TIMEOUT", "no pending jobs");
    const outcome =
      this.results.shift() ??
      (await new Promise<JobOutcome>((resolve) => {
        const waiter: Waiter = { resolve };
        if (timeoutMs !== undefined) {
          waiter.timer = setTimeout(() => {
            const at = this.waiters.indexOf(waiter);
            if (at >= 0) this.waiters.splice(at, 1);
            resolve({ error: new UpmClientError("TIMEOUT", `${timeoutMs} ms`) });
          }, timeoutMs);
        }
        this.waiters.push(waiter);
      }));
    if (outcome.error) {
      if (outcome.error.variant !== "TIMEOUT") this.pendingJobs--;
      throw outcome.error;
    }
    this.pendingJobs--;
    return outcome.payload!;
  }

  /** Wait until every written job has completed; consumes nothing. */
  async flush(): Promise<void> {
    this.checkOpen();
    await this.connection.control(this.deviceName, "flush");
  }

  /** Pending/submitted counters as reported by the runtime. */
  async stat(): Promise<string> {
    this.checkOpen();
    const reply = await this.connection.control(this.deviceName, "stat");
    return reply.payload.toString("utf-8");
  }

  /** Close the device and the connection; safe to call twice. */
  async close(): Promise<void> {
    if (!this.open) return;
    this.open = false;
    try {
      if (!this.connection.faulted) {
        await this.connection.control(this.deviceName, "close");
      }
      this.connection.sayGoodbye();
    } catch {
      // best-effort: the server tears the handle down on disconnect too
    } finally {
      this.connection.destroy();
    }
  }

  get isOpen(): boolean {
    return this.open;
  }

  async [Symbol.asyncDispose](): Promise<void> {
    await this.close();
  }
}

export const openDevice = RemoteDeviceFile.open;

/** Run `body` with an open device; always closes it, like a with-block. */
export async function withDevice<T>(
  path: string,
  body: (device: RemoteDeviceFile) => Promise<T>,
  address: string = defaultAddress(),
): Promise<T> {
  const device = await RemoteDeviceFile.open(path, address);
  try {
    return await body(device);
  } finally {
    await device.close();
  }
}
