/** In-memory stand-in for a WebSocket, for driving HubClient in tests. */

import { SocketLike } from "../src/client.js";
import { Envelope, decodeEnvelope, encodeEnvelope } from "../src/protocol.js";

export class FakeSocket implements SocketLike {
  sent: Envelope[] = [];
  closedByClient = false;
  onopen: ((event: unknown) => void) | null = null;
  onmessage: ((event: { data: unknown }) => void) | null = null;
  onclose: ((event: unknown) => void) | null = null;
  onerror: ((event: unknown) => void) | null = null;

  send(data: string): void {
    this.sent.push(decodeEnvelope(data));
  }

  close(): void {
    this.closedByClient = true;
  }

  openNow(): void {
    this.onopen?.({});
  }

  deliver(envelope: Envelope): void {
    this.onmessage?.({ data: encodeEnvelope(envelope) });
  }

  dropConnection(): void {
    this.onclose?.({});
  }

  takeSent(): Envelope[] {
    const out = this.sent;
    this.sent = [];
    return out;
  }
}
