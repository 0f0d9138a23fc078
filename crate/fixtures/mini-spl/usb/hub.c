int usb_register(void)
{
	int ports = 4;
#ifdef CONFIG_USB_STORAGE
	ports += 1;
#endif
	return ports;
}
