/** Deterministic request payloads used to record the golden transcript. */

export type Row = [number, number, number, number];

export function track(
  history: number,
  speedX: number,
  speedY: number,
  startX = 0,
  absent: number[] = [],
): Row[] {
  const rows: Row[] = [];
  for (let i = 0; i < history; i++) {
    const t = 0.2 * i;
    const present = absent.includes(i) ? 0 : 1;
    rows.push([
      Number(t.toFixed(1)),
      Number((startX + speedX * t).toFixed(3)),
      Number((speedY * t).toFixed(3)),
      present,
    ]);
  }
  return rows;
}

export function goldenRequests(): object[] {
  return [
    { type: "hello", protocol_version: 1 },
    {
      type: "predict",
      id: 1,
      rate_hz: 5,
      horizon: 25,
      target: track(16, 8.0, 0.0),
      neighbors: [],
    },
    {
      type: "predict",
      id: 2,
      rate_hz: 5,
      horizon: 25,
      target: track(16, 7.5, 0.1),
      neighbors: [
        { cell: [5, 1], track: track(16, 6.0, 0.0, -12.0) },
        { cell: [8, 2], track: track(16, 9.0, -0.2, 10.0, [0, 1, 2]) },
      ],
    },
    {
      type: "predict",
      id: 3,
      rate_hz: 5,
      horizon: 10,
      target: track(16, 8.5, -0.1, 0, [4, 9]),
      neighbors: [{ cell: [0, 0], track: track(16, 5.0, 0.0, -40.0) }],
    },
    {
      type: "predict",
      id: 4,
      rate_hz: 10,
      target: track(16, 3.0, 0.3),
      neighbors: [
        { cell: [6, 0], track: track(16, 3.0, 0.0, -3.0) },
        { cell: [6, 2], track: track(16, 3.2, 0.0, 3.0) },
        { cell: [12, 1], track: track(16, 4.0, 0.0, 30.0) },
      ],
    },
  ];
}
