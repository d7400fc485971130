int pick(int tag) {
  int out = 0;
  switch (tag) {
    case 0:
      out = 10;
      break;
    case 1:
      out = 20;
      break;
    default:
      out = 30;
      break;
  }
  return out;
}

int main(void) {
  return pick(1);
}
